#include "prooflab/cut_elim.hpp"

#include <algorithm>
#include <set>

namespace prooflab {

ProofTree unfold(const ProofDag& z, long long cap) {
  // Predicted size = total path multiplicity; checked before allocating.
  std::vector<long long> mult = path_multiplicity(z, cap);
  long long total = 0;
  for (long long m : mult) {
    total += m;
    if (total > cap) throw ResourceError("unfold: tree size exceeds cap");
  }

  ProofTree tree;
  tree.nodes.reserve(static_cast<std::size_t>(total));
  // Iterative DFS; each stack entry creates one occurrence.
  struct Item {
    int uid;
    int parent_occ;
  };
  std::vector<Item> stack{{z.root, -1}};
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    const DagNode& n = z.node(it.uid);
    TreeNode occ;
    occ.occ = tree.num_nodes();
    occ.uid = it.uid;
    occ.depth = n.depth;
    if (it.parent_occ >= 0) {
      tree.nodes[static_cast<std::size_t>(it.parent_occ)].children.push_back(occ.occ);
    }
    int self = occ.occ;
    tree.nodes.push_back(std::move(occ));
    // Push child slots in reverse so they unfold left-to-right.
    for (std::size_t i = n.children.size(); i-- > 0;) {
      stack.push_back({n.children[i], self});
    }
  }
  return tree;
}

DecisionCounts decision_counts(const ProofDag& z, const ProofTree& tree) {
  DecisionCounts dc;
  for (const DagNode& n : z.nodes) {
    if (n.terminal) {
      dc.n_sol += n.solver_len;
    } else {
      dc.n_dec += 1;
    }
  }
  dc.n_hier = dc.n_dec + dc.n_sol;
  dc.occ_by_depth.assign(static_cast<std::size_t>(z.max_depth) + 1, 0);
  for (const TreeNode& t : tree.nodes) {
    dc.occ_by_depth[static_cast<std::size_t>(t.depth)]++;
    const DagNode& n = z.node(t.uid);
    dc.n_flat += n.terminal ? n.solver_len : 1;
  }
  return dc;
}

ProofDag recanonicalize(const ProofDag& z, const ProofTree& tree) {
  ProofDag out;
  std::set<int> seen;
  for (const TreeNode& t : tree.nodes) seen.insert(t.uid);
  out.root = z.root;
  out.max_depth = 0;
  // Rebuild nodes in uid order; child slots of a uid are identical across all
  // of its occurrences, so take them from the first occurrence seen.
  out.nodes.resize(z.nodes.size());
  std::vector<bool> filled(z.nodes.size(), false);
  for (const TreeNode& t : tree.nodes) {
    auto i = static_cast<std::size_t>(t.uid);
    if (filled[i]) continue;
    filled[i] = true;
    DagNode n;
    n.uid = t.uid;
    n.depth = t.depth;
    const DagNode& src = z.node(t.uid);
    n.terminal = src.terminal;
    n.solver_len = src.solver_len;
    for (int c : t.children) n.children.push_back(tree.node(c).uid);
    out.max_depth = std::max(out.max_depth, n.depth);
    out.nodes[i] = std::move(n);
  }
  return out;
}

}  // namespace prooflab
