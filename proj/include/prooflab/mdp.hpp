#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prooflab/errors.hpp"
#include "prooflab/rng.hpp"

namespace prooflab {

enum class DecisionType { Dec, Sol, Flat };

const char* decision_type_name(DecisionType t);

// One open proof obligation. `uid` names the unique subgoal in the source DAG,
// `occurrence` disambiguates tree copies of the same uid, `remaining` is the
// number of solver steps left on a terminal goal (0 on decomposition goals).
struct GoalToken {
  int uid = 0;
  int depth = 0;
  int occurrence = 0;
  int remaining = 0;

  friend bool operator==(const GoalToken&, const GoalToken&) = default;
};

enum class Status { Open, Success, Failure };

// Multiset of open goals plus the terminal flags. Goals are kept sorted
// deepest-first; the front goal is the focused one.
struct ProverState {
  std::vector<GoalToken> goals;
  Status status = Status::Open;

  void canonicalize();
  std::string canonical_key() const;
};

// A candidate-set class: the unit tabular policies and generator conditionals
// are keyed by. `reference` is the index of the action the verifier accepts.
struct DecisionClass {
  std::string key;
  DecisionType type = DecisionType::Dec;
  int num_candidates = 0;
  int reference = 0;
  // Provenance of the class within the source instance (used for coarsening
  // and diagnostics; random test MDPs leave these at defaults).
  int uid = -1;
  int depth = -1;
  int remaining = 0;
  int occurrence = -1;
};

struct ClassTable {
  std::vector<DecisionClass> classes;
  int size() const { return static_cast<int>(classes.size()); }
  const DecisionClass& at(int cls) const { return classes.at(static_cast<std::size_t>(cls)); }
};

// Sentinel next-state ids.
inline constexpr std::int32_t kSuccessNode = -1;
inline constexpr std::int32_t kFailureNode = -2;

// Compiled deterministic finite-horizon MDP. Node i carries its decision
// class and the full transition row next[a] for a < M(class). Success and
// Failure are absorbing sentinels.
struct Kernel {
  struct Node {
    int cls = 0;
    std::vector<std::int32_t> next;
    // Snapshot of the open goals at this node, when the kernel was compiled
    // from a proof instance (empty for synthetic test MDPs).
    std::vector<GoalToken> goals;
  };

  std::vector<Node> nodes;
  std::int32_t start = 0;
  std::shared_ptr<const ClassTable> classes;

  const Node& node(std::int32_t i) const { return nodes.at(static_cast<std::size_t>(i)); }
  int num_nodes() const { return static_cast<int>(nodes.size()); }
};

// Probability row over the candidate set of a class. Must return a span of
// exactly M(cls) entries; an empty span means the policy is undefined there.
using PolicyFn = std::function<std::span<const double>(int cls)>;

struct TraceStep {
  int t = 0;
  std::int32_t node = 0;
  int cls = 0;
  int choice = 0;
  DecisionType type = DecisionType::Dec;
};

struct Trace {
  std::vector<TraceStep> steps;
  Status final_status = Status::Open;
  std::int32_t final_node = 0;  // meaningful when final_status == Open

  bool successful() const { return final_status == Status::Success; }
  int length() const { return static_cast<int>(steps.size()); }
};

// Applies one action. Terminal sentinels are absorbing fixed points.
std::int32_t step(const Kernel& k, std::int32_t node, int choice);

// V^pi(horizon, start): probability of reaching Success within `horizon`
// steps, by the exact backward recursion. Exact up to rounding.
double reach_value_exact(const Kernel& k, const PolicyFn& pi, int horizon,
                         std::int32_t start);

// All values V_t(node) for t = 0..horizon; row t holds V_t per node.
std::vector<std::vector<double>> reach_value_table(const Kernel& k, const PolicyFn& pi,
                                                   int horizon);

inline constexpr int kInfiniteLength = std::numeric_limits<int>::max();

// BFS over non-failing actions; kInfiniteLength when Success is unreachable
// within `cap` steps.
int min_proof_length(const Kernel& k, std::int32_t start, int cap);

// Deterministic policy following a shortest path to Success where one exists.
// Rows are point masses; states with no path get a point mass on action 0.
class OptimalPolicy {
 public:
  explicit OptimalPolicy(const Kernel& k);
  std::span<const double> probs_for_node(std::int32_t node) const;
  // PolicyFn keyed by class id; valid because compiled instance kernels give
  // distinct classes to distinct nodes.
  PolicyFn view(const Kernel& k) const;

 private:
  std::vector<std::vector<double>> rows_;
  std::vector<std::vector<double>> by_class_;
};

// Samples A_t ~ pi(.|class(X_t)), steps the kernel, stops at a terminal state
// or after `horizon` decisions.
Trace rollout(const Kernel& k, const PolicyFn& pi, int horizon, std::int32_t start,
              Rng& rng);

// ---- Synthetic test instances ----------------------------------------------

struct RandomMdpParams {
  int num_layers = 4;   // decision layers before the terminal layer
  int width = 3;        // nodes per layer
  int num_candidates = 3;
  double fail_prob = 0.35;    // chance an action is wired to Failure
  double early_success = 0.05;  // chance an inner action is wired to Success
  double rho = 0.05;          // floor of the attached generator conditionals
};

struct RandomMdp {
  Kernel kernel;
  std::vector<std::vector<double>> conditionals;  // per class
  PolicyFn q() const;
};

// Layered random MDP whose start can reach Success (re-wired if needed).
// Classes are one-per-node so tabular objects stay well-defined.
RandomMdp random_mdp(const RandomMdpParams& params, Rng& rng);

}  // namespace prooflab
