#pragma once

#include <vector>

#include "prooflab/dag.hpp"

namespace prooflab {

// Cut-free unfolding of a proof DAG: every shared node is duplicated once per
// usage context. Occurrence ids index `nodes`; the root occurrence is 0.
struct TreeNode {
  int occ = 0;
  int uid = 0;
  int depth = 0;
  std::vector<int> children;  // occurrence ids, in slot order
};

struct ProofTree {
  std::vector<TreeNode> nodes;
  int root = 0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  const TreeNode& node(int occ) const { return nodes.at(static_cast<std::size_t>(occ)); }
};

// Depth-first expansion. Throws ResourceError when the unfolded size would
// exceed `cap` (the blow-up is the object of study; the cap keeps it finite).
ProofTree unfold(const ProofDag& z, long long cap = 10'000'000);

struct DecisionCounts {
  long long n_dec = 0;   // unique non-terminal nodes
  long long n_sol = 0;   // sum of L_u over unique terminals
  long long n_hier = 0;  // n_dec + n_sol
  long long n_flat = 0;  // non-terminal occurrences + occurrence-weighted solver steps
  std::vector<long long> occ_by_depth;
};

// Pre: tree == unfold(z).
DecisionCounts decision_counts(const ProofDag& z, const ProofTree& tree);

// Merges identical-uid occurrences back into a DAG; used to check that
// unfolding loses no structure beyond sharing.
ProofDag recanonicalize(const ProofDag& z, const ProofTree& tree);

}  // namespace prooflab
