#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "prooflab/mdp.hpp"

namespace prooflab {

// Success-to-go table h_r(x) = P^q_x(X_r in G) for r = 0..L. Success and
// Failure are handled implicitly (1 and 0 at every r).
struct SuccessToGo {
  int L = 0;
  std::vector<std::vector<double>> h;  // h[r][node]

  double at(int r, std::int32_t node) const {
    if (node == kSuccessNode) return 1.0;
    if (node == kFailureNode) return 0.0;
    return h.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(node));
  }
};

// Exact backward recursion h_0 = 1{x in G}, h_{r+1}(x) = E_{a~q} h_r(F(x,a)).
SuccessToGo success_to_go(const Kernel& k, const PolicyFn& q, int L);

// Success-conditioned policy q*_r(a|x) = q(a|x) h_{r-1}(F(x,a)) / h_r(x).
class DoobPolicy {
 public:
  DoobPolicy(const Kernel& k, const PolicyFn& q, const SuccessToGo& h);

  // Throws ConditioningError where h_r(x) = 0 (conditioning on a null event).
  std::span<const double> probs(int r, std::int32_t node) const;
  int horizon() const { return L_; }

 private:
  int L_;
  std::vector<std::vector<std::vector<double>>> rows_;  // [r][node][a]
  std::vector<std::vector<char>> defined_;
};

// Rollout of the Doob policy over exactly L remaining steps (stops early on
// absorption into a terminal state).
Trace doob_rollout(const Kernel& k, const DoobPolicy& qstar, std::int32_t start, Rng& rng);

// Twist function hhat_r(x) > 0; r indexes remaining steps.
using TwistFn = std::function<double(int r, std::int32_t node)>;

TwistFn exact_twist(const SuccessToGo& h);
TwistFn constant_twist();
// Exact h up to m remaining steps, frozen at h_m beyond (a horizon-truncated
// heuristic); zero values are lifted to `floor` to keep the twist positive.
TwistFn truncated_twist(const Kernel& k, const PolicyFn& q, int m, double floor = 1e-3);

struct SmcOptions {
  int num_particles = 128;
  double ess_frac = 0.5;        // resample when ESS < ess_frac * N; 0 disables
  bool per_step_success_potential = true;  // multiply 1{X != bot} every step
  // Propagation parallelizes across particles (each owns a stream and a
  // weight slot); resampling stays a sequential synchronization point.
  int parallel = 0;  // 0 serial, 1 OpenMP
};

struct SmcResult {
  bool found = false;           // false = no survivor at the terminal step
  Trace trace;                  // one successful trace when found
  std::vector<double> ess;                // per step, pre-resampling
  std::vector<double> logw_variance;      // per step, pre-resampling, alive particles
  std::vector<char> resampled;            // per step
  std::vector<std::vector<int>> ancestors;  // per step, identity when no resampling
  double final_alive_fraction = 0.0;      // particles with positive terminal weight
};

// Twisted SMC for L-step successful traces: twisted proposals ~ q * hhat,
// importance weights q / q~, failure potential each step, ESS-triggered
// multinomial resampling with ancestor recording, terminal success
// reweighting, and single-index ancestor tracing for the returned trace.
SmcResult twisted_smc(const Kernel& k, const PolicyFn& q, const TwistFn& hhat, int L,
                      const SmcOptions& opt, std::int32_t start, Rng& rng);

// ---- Exact path-space oracle -------------------------------------------------

// A path is the action sequence until absorption (or length L). Probabilities
// are exact products of policy masses.
struct PathLaw {
  std::map<std::vector<int>, double> prob;
  double total_mass = 0.0;
};

// Enumerates all q-paths of horizon L from start; throws ResourceError past
// `max_paths`. With `successful_only`, keeps paths ending in Success and
// renormalizes: the success-conditioned law.
PathLaw enumerate_paths(const Kernel& k, const PolicyFn& q, int L, std::int32_t start,
                        bool successful_only, long long max_paths = 1'000'000);

// Exact law of the Doob rollout over the same path space.
PathLaw doob_path_law(const Kernel& k, const DoobPolicy& qstar, int L, std::int32_t start,
                      long long max_paths = 1'000'000);

double total_variation(const PathLaw& a, const PathLaw& b);

}  // namespace prooflab
