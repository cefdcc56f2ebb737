#pragma once

#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "prooflab/dag.hpp"
#include "prooflab/instance.hpp"
#include "prooflab/mdp.hpp"

namespace prooflab {

// ---- Tabular policies and ERM -------------------------------------------------

struct TabularPolicy {
  double rho = 0.0;
  std::vector<std::vector<double>> rows;  // per class id

  std::span<const double> probs(int cls) const {
    const auto& row = rows.at(static_cast<std::size_t>(cls));
    return {row.data(), row.size()};
  }
  PolicyFn view() const;

  static TabularPolicy uniform(const ClassTable& classes, double rho);
};

// Exact minimizer of empirical log-loss over {p >= rho, sum p = 1}: the
// water-filling projection of the count vector. All-zero counts give uniform.
std::vector<double> floor_projected_mle(std::span<const double> counts, int M, double rho);

struct DatasetRow {
  int cls = 0;
  int choice = 0;
  DecisionType type = DecisionType::Dec;
  int trace_id = 0;
};

struct Dataset {
  std::vector<DatasetRow> rows;
  int num_traces = 0;

  void append(const Trace& trace, int trace_id);
};

// n success-filtered labeled traces of the instance (permissive rollouts
// under the generator conditionals).
Dataset sample_dataset(const Env& env, Mode mode, int n_traces, Rng& rng);

struct FitOptions {
  double rho = 0.0;
  std::optional<DecisionType> type_filter;
  // Optional coarsening: classes mapped to the same group share one fitted
  // row. Size must equal the class count.
  const std::vector<int>* class_group = nullptr;
};

TabularPolicy erm_fit(const ClassTable& classes, const Dataset& data, const FitOptions& opt);

// Group map for the deliberately coarsened hypothesis class: classes merged
// by (type, depth, remaining).
std::vector<int> coarse_group_by_depth(const ClassTable& classes);

// ---- Mixture KL and the risk identity ------------------------------------------

// Weights of the decision-point mixture nu over classes.
std::vector<double> empirical_class_weights(const Dataset& data, int num_classes,
                                            std::optional<DecisionType> filter = {});
// Each class of a compiled instance occurs exactly once along the proof, so
// the exact time-mixture is uniform over classes.
std::vector<double> exact_class_weights(const ClassTable& classes,
                                        std::optional<DecisionType> filter = {});

// E_{S~w}[ KL(q(.|S) || pi(.|S)) ].
double mixture_kl(const PolicyFn& pi, const GeneratorConditionals& q,
                  std::span<const double> weights);

// E_{S~w} E_{A~q(.|S)}[ -log pi(A|S) ].
double expected_risk(const PolicyFn& pi, const GeneratorConditionals& q,
                     std::span<const double> weights);

// (1/N) sum over rows of -log pi(choice | cls).
double empirical_risk(const Dataset& data, const PolicyFn& pi);

// Per-class empirical frequency vectors (uniform rows where a class is unseen).
GeneratorConditionals empirical_conditionals(const Dataset& data, const ClassTable& classes);

// ---- Latent terminal-flag model -------------------------------------------------

// Observation of one instance with the decision types masked: per unique node
// its depth and recorded action labels, grouped by depth. A node with >= 2
// labels is certainly terminal; a single-label node at an interior depth may
// be either a one-step terminal or a decomposition.
struct NodeObservation {
  int depth = 0;
  std::vector<int> labels;
};

struct LatentObservation {
  std::vector<NodeObservation> nodes;  // depth-major order
  std::vector<long long> C;            // per-depth unique node counts
};

// Generative parameters theta: structure (term profile, solver lengths) and
// the label conditionals over homogeneous classes.
struct LatentModel {
  int D = 2;
  int b_eff = 2;
  int M = 4;
  double rho = 0.02;
  double alpha = 0.5;
  double K0 = 8.0;
  std::vector<double> term_profile;             // size D+1, last entry 1
  std::shared_ptr<const ClassTable> classes;    // homogeneous (type, depth, rem) table
  std::vector<std::vector<double>> label_probs; // aligned with classes

  int dec_cls(int depth) const;
  int sol_cls(int depth, int remaining) const;  // -1 when absent from the table
  double length_log_prob(int depth, int len) const;

  // Lookup tables derived from `classes`; rebuilt by build_index().
  std::vector<int> dec_index;
  std::vector<std::vector<int>> sol_index;
  void build_index();
};

// Standalone homogeneous model: dec classes for depths 0..D-1 and sol classes
// for every (depth, remaining <= len_cap), with label conditionals drawn from
// the designed margin law.
LatentModel make_latent_model(const GenParams& params, int len_cap, Rng& rng);

// Masks a DAG into the observation: per node, its depth and sampled labels;
// flags, lengths and edges stay hidden (lengths leak only through label
// counts, edges only through per-depth totals).
LatentObservation observe_masked(const ProofDag& z, const LatentModel& truth, Rng& rng);

// One candidate completion: terminal flags per observation node.
struct LatentCompletion {
  std::vector<char> terminal;
};

// All flag assignments consistent with the observed counts: per depth,
// exactly T_d = C_d - C_{d+1}/b_eff terminals, nodes with >= 2 labels forced.
// Throws ResourceError past `cap`, ConditioningError when inconsistent.
std::vector<LatentCompletion> latent_support(const LatentObservation& y,
                                             const LatentModel& model, long long cap = 1 << 16);

// log p_theta(z) + log p_theta(y | z) for a completion (evidence up to the
// global success-conditioning constant).
double completion_log_joint(const LatentObservation& y, const LatentCompletion& z,
                            const LatentModel& model);

struct PosteriorFamily {
  // weights[i] over support[i]; both aligned.
  std::vector<LatentCompletion> support;
  std::vector<double> weights;
};

// Weights proportional to p(z) p(y|z) 1{Succ}, normalized.
PosteriorFamily exact_posterior(const LatentObservation& y,
                                const std::vector<LatentCompletion>& support,
                                const LatentModel& model);

double log_evidence(const LatentObservation& y, const std::vector<LatentCompletion>& support,
                    const LatentModel& model);

// E_{z~r}[ log p_theta(y, z) - log r(z) ].
double elbo(const LatentModel& model, const PosteriorFamily& r, const LatentObservation& y);

// Mean-field family: independent Bernoulli flags per ambiguous node,
// restricted to the consistent support; fitted by coordinate ascent on the
// ELBO over the marginals.
PosteriorFamily mean_field_posterior(const LatentObservation& y,
                                     const std::vector<LatentCompletion>& support,
                                     const LatentModel& model, int sweeps = 3);

// Decision points (class, label) revealed by a completion.
std::vector<std::pair<int, int>> completion_decisions(const LatentObservation& y,
                                                      const LatentCompletion& z,
                                                      const LatentModel& model);

// Posterior-weighted ERM over the latent decision points: erm_fit on the
// posterior-weighted counts, split by decision type.
std::pair<TabularPolicy, TabularPolicy> posterior_weighted_erm(
    const std::vector<LatentObservation>& ys, const std::vector<PosteriorFamily>& posteriors,
    const LatentModel& model, double rho);

// Mean KL(r_phi || exact) across the dataset.
double postkl(const std::vector<PosteriorFamily>& phi,
              const std::vector<PosteriorFamily>& exact);

// Posterior-weighted mean per-decision log-loss of `pi` on type `typ`.
double posterior_weighted_risk(const std::vector<LatentObservation>& ys,
                               const std::vector<PosteriorFamily>& posteriors,
                               const LatentModel& model, const PolicyFn& pi,
                               DecisionType typ);

// ---- EM ------------------------------------------------------------------------

struct EmState {
  LatentModel model;
  std::vector<LatentObservation> data;
  std::vector<std::vector<LatentCompletion>> supports;
  std::vector<PosteriorFamily> posteriors;
  TabularPolicy policy_dec, policy_sol;
  double empirical_elbo = 0.0;
  bool exact_estep = true;
};

EmState em_init(std::vector<LatentObservation> data, const LatentModel& init,
                bool exact_estep = true);

// One E + M + policy cycle. The M-step is generalized EM: closed-form updates
// where exact (terminal profile, label conditionals) and an accept-if-improved
// line search for (alpha, K0), so the empirical ELBO never decreases.
void em_step(EmState& state);

// Posterior-expected sufficient statistics of one observation.
SuffStats expected_suff_stats(const LatentObservation& y, const PosteriorFamily& r);

// ---- Moment estimators -----------------------------------------------------------

struct DepthDiagnostic {
  int depth = 0;
  double C = 0, T = 0, S = 0, Lbar = 0;
  double b_ratio = 0, alpha_ratio = 0, product_ratio = 0;
  bool b_usable = false, alpha_usable = false, product_usable = false;
};

// Estimates are NaN where the input statistics cannot support them.
struct MomentEstimates {
  double b_eff_hat, alpha_hat, product_hat;
  double b_eff_hat_adjusted;       // children per non-terminal node
  double b_eff_reg, alpha_reg;     // log-linear regression across depths
  bool individual_recoverable = true;
  bool aggregated_only = false;
  std::vector<DepthDiagnostic> per_depth;

  MomentEstimates();
};

// Ratio and log-regression estimators from (possibly posterior-expected)
// sufficient statistics, averaged entrywise across instances.
MomentEstimates estimate_structure(const std::vector<SuffStats>& stats);
// Aggregated-only variant: just the per-depth solver totals S_d. Only the
// product b_eff * alpha is identifiable; the individual flags are cleared.
MomentEstimates estimate_structure_aggregated(const std::vector<std::vector<double>>& s_only);

}  // namespace prooflab
