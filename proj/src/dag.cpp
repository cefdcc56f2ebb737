#include "prooflab/dag.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace prooflab {

double GenParams::terminal_prob(int depth) const {
  if (depth >= D) return 1.0;
  if (term_profile.empty()) return 0.0;
  if (depth < 0 || depth >= static_cast<int>(term_profile.size())) return 0.0;
  return term_profile[static_cast<std::size_t>(depth)];
}

void GenParams::validate() const {
  if (D < 1) throw ParameterError("GenParams: D must be >= 1");
  if (b_eff < 1) throw ParameterError("GenParams: b_eff must be >= 1");
  if (r < 1) throw ParameterError("GenParams: r must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("GenParams: alpha must be in (0,1)");
  if (!(K0 > 0.0)) throw ParameterError("GenParams: K0 must be positive");
  if (M < 2) throw ParameterError("GenParams: M must be >= 2");
  if (!(beta > 0.0)) throw ParameterError("GenParams: beta must be positive");
  if (!(C0 > 0.0)) throw ParameterError("GenParams: C0 must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ParameterError("GenParams: rho must be in (0,1)");
  if (rho * M > 1.0) throw ParameterError("GenParams: rho * M must be <= 1");
  if (margin_k < 1 || margin_k >= M) throw ParameterError("GenParams: margin_k must be in [1, M)");
  if (!term_profile.empty() && static_cast<int>(term_profile.size()) != D + 1) {
    throw ParameterError("GenParams: term_profile must have D + 1 entries");
  }
  for (double p : term_profile) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("GenParams: term_profile entries in [0,1]");
  }
  if (!term_profile.empty() && term_profile.back() < 1.0) {
    throw ParameterError("GenParams: term_profile must be 1 at depth D");
  }
  // Parents must be distinct below the root layer; layer d-1 holds at most
  // b_eff^(d-1) nodes, so the binding requirement is r <= b_eff for D >= 2.
  if (D >= 2 && r > b_eff) {
    throw ParameterError("GenParams: not enough distinct parents (r > b_eff at depth 2)");
  }
}

std::vector<std::pair<int, int>> ProofDag::edges() const {
  std::vector<std::pair<int, int>> out;
  for (const DagNode& n : nodes) {
    for (int c : n.children) out.emplace_back(n.uid, c);
  }
  return out;
}

void ProofDag::validate() const {
  if (nodes.empty()) throw ContractError("ProofDag: empty");
  std::vector<int> indeg(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const DagNode& n = nodes[i];
    if (n.uid != static_cast<int>(i)) throw ContractError("ProofDag: uid/index mismatch");
    if (n.terminal) {
      if (n.solver_len < 1) throw ContractError("ProofDag: terminal node without solver data");
      if (!n.children.empty()) throw ContractError("ProofDag: terminal node with children");
    } else {
      if (n.children.empty()) throw ContractError("ProofDag: non-terminal node without children");
    }
    for (int c : n.children) {
      const DagNode& child = nodes.at(static_cast<std::size_t>(c));
      if (child.depth != n.depth + 1) throw ContractError("ProofDag: edge does not span one depth");
      indeg[static_cast<std::size_t>(c)]++;
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (static_cast<int>(i) != root && indeg[i] < 1) {
      throw ContractError("ProofDag: non-root node without a parent");
    }
  }
  if (nodes[static_cast<std::size_t>(root)].depth != 0) {
    throw ContractError("ProofDag: root must sit at depth 0");
  }
}

static int sample_solver_len(const GenParams& params, int depth, Rng& rng) {
  double mean = params.K0 * std::pow(params.alpha, depth);
  if (mean <= 1.0) return 1;  // clamp: geometric mean below the minimum length
  return static_cast<int>(rng.geometric(1.0 / mean));
}

ProofDag sample_dag(const GenParams& params, Rng& rng) {
  params.validate();
  ProofDag z;
  auto add_node = [&](int depth, bool terminal) {
    DagNode n;
    n.uid = z.num_nodes();
    n.depth = depth;
    n.terminal = terminal;
    if (terminal) n.solver_len = sample_solver_len(params, depth, rng);
    z.nodes.push_back(std::move(n));
    return z.nodes.back().uid;
  };

  bool root_terminal = rng.uniform01() < params.terminal_prob(0);
  std::vector<int> layer{add_node(0, root_terminal)};
  z.max_depth = 0;

  for (int d = 1; d <= params.D; ++d) {
    std::vector<int> parents;
    for (int uid : layer) {
      if (!z.node(uid).terminal) parents.push_back(uid);
    }
    if (parents.empty()) break;  // effective depth reached

    const int num_children = params.b_eff * static_cast<int>(parents.size());
    std::vector<int> children;
    children.reserve(static_cast<std::size_t>(num_children));
    for (int j = 0; j < num_children; ++j) {
      bool terminal = d >= params.D || rng.uniform01() < params.terminal_prob(d);
      children.push_back(add_node(d, terminal));
    }

    // Each child receives exactly r parent slots. Below a multi-node layer the
    // r parents are distinct; a single-parent layer reuses the parent slot-wise.
    const int P = static_cast<int>(parents.size());
    if (params.randomized_parents && P >= params.r) {
      for (int c : children) {
        std::vector<int> pool = parents;
        rng.shuffle(pool);
        for (int i = 0; i < params.r; ++i) {
          z.nodes[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])].children.push_back(c);
        }
      }
    } else {
      if (P < params.r && P != 1) {
        throw ParameterError("sample_dag: not enough distinct parents at depth " +
                             std::to_string(d));
      }
      std::vector<int> order = parents;
      rng.shuffle(order);
      long long slot = 0;
      for (int j = 0; j < num_children; ++j) {
        for (int i = 0; i < params.r; ++i, ++slot) {
          int parent = order[static_cast<std::size_t>(slot % P)];
          z.nodes[static_cast<std::size_t>(parent)].children.push_back(
              children[static_cast<std::size_t>(j)]);
        }
      }
    }
    layer = std::move(children);
    z.max_depth = d;
  }

  // A lone terminal root is a valid degenerate instance (solved immediately).
  z.validate();
  return z;
}

SuffStats suff_stats(const ProofDag& z) {
  SuffStats s;
  int depths = z.max_depth + 1;
  s.C.assign(static_cast<std::size_t>(depths), 0);
  s.T.assign(static_cast<std::size_t>(depths), 0);
  s.S.assign(static_cast<std::size_t>(depths), 0);
  for (const DagNode& n : z.nodes) {
    auto d = static_cast<std::size_t>(n.depth);
    s.C[d]++;
    if (n.terminal) {
      s.T[d]++;
      s.S[d] += n.solver_len;
    }
  }
  s.Lbar.assign(static_cast<std::size_t>(depths), 0.0);
  for (int d = 0; d < depths; ++d) {
    auto i = static_cast<std::size_t>(d);
    if (s.T[i] > 0) s.Lbar[i] = static_cast<double>(s.S[i]) / static_cast<double>(s.T[i]);
  }
  return s;
}

std::vector<long long> path_multiplicity(const ProofDag& z, long long cap) {
  std::vector<long long> mult(z.nodes.size(), 0);
  mult[static_cast<std::size_t>(z.root)] = 1;
  // Nodes are stored depth-major, so a forward sweep is topological.
  for (const DagNode& n : z.nodes) {
    long long m = mult[static_cast<std::size_t>(n.uid)];
    if (m == 0 && n.uid != z.root) continue;
    for (int c : n.children) {
      long long& mc = mult[static_cast<std::size_t>(c)];
      mc += m;
      if (mc > cap) throw ResourceError("path_multiplicity: count exceeds cap");
    }
  }
  return mult;
}

}  // namespace prooflab
