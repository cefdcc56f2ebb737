#pragma once

#include <span>
#include <utility>
#include <vector>

#include "prooflab/instance.hpp"
#include "prooflab/mdp.hpp"

namespace prooflab {

struct TopKConfig {
  int k_dec = 1;
  int k_sol = 1;
  int k_flat = 1;
  long long budget = 0;  // OR-node expansions; 0 = 10 * N_flat of the instance
  int horizon = 0;       // 0 = the instance's own proof length

  int k_for(DecisionType t) const {
    switch (t) {
      case DecisionType::Dec: return k_dec;
      case DecisionType::Sol: return k_sol;
      case DecisionType::Flat: return k_flat;
    }
    return 1;
  }
};

// The k most likely candidates, ties broken by ascending candidate index.
std::vector<int> top_k(std::span<const double> probs, int k);

// True iff every recorded action of the trace lies in the policy's top-k list
// for its class.
bool coverage_event(const Trace& trace, const PolicyFn& pi, const TopKConfig& cfg,
                    const ClassTable& classes);

struct SearchResult {
  bool success = false;
  bool budget_exhausted = false;  // distinct from proof-nonexistence at this k
  long long expansions = 0;
  std::vector<std::pair<int, int>> proof;  // (class, action) in proof order
};

// Depth-first AND-OR search over the instance: OR choices in top-k rank
// order, verifier rejection backtracks, AND children left to right. In
// hierarchical mode with `memo`, solved and failed-at-this-k subgoals are
// cached by uid; flat mode cannot share (occurrences carry no uid key).
SearchResult backtracking_search(const Env& env, Mode mode, const PolicyFn& pi,
                                 const TopKConfig& cfg, bool memo = true);

// ---- Margin statistics -------------------------------------------------------

struct MarginAuditResult {
  long long points = 0;
  long long misrankings = 0;
  long long viol_crude = 0;    // Lemma: 1 - q(Top_k(pi)) <= (1 - m_k) + 1{misranked}
  long long viol_linf = 0;     // misranked => ||pi - q||_inf >= gap/2
  long long viol_kl = 0;       // misranked => KL(q||pi) >= gap^2/8
  long long viol_pinsker = 0;  // ||q - pi||_inf^2 <= 2 KL(q||pi)
  double misrank_rate = 0.0;   // weighted by the mixture
  double mean_topk_loss = 0.0; // E[1 - m_k]
  double mean_kl = 0.0;
  double best_u = 0.0;         // empirically optimal threshold in C0 u^b + 8 KL/u^2
  double best_u_bound = 0.0;

  long long violations() const { return viol_crude + viol_linf + viol_kl + viol_pinsker; }
};

// Evaluates the misranking inequality chain at every class with positive
// mixture weight. `beta`/`C0` feed the reported optimal-threshold tradeoff.
MarginAuditResult margin_audit(const PolicyFn& pi, const GeneratorConditionals& q,
                               const ClassTable& classes, std::span<const double> weights,
                               int k, double beta, double C0);

// Chain checks for one (q, pi) pair; used by the randomized property suites.
struct PairCheck {
  bool misranked = false;
  bool ok_linf = true;
  bool ok_kl = true;
  bool ok_pinsker = true;
  bool ok_crude = true;
};
PairCheck check_margin_pair(std::span<const double> q, std::span<const double> pi, int k);

}  // namespace prooflab
