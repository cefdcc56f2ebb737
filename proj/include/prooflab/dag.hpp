#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "prooflab/errors.hpp"
#include "prooflab/rng.hpp"

namespace prooflab {

// Parameters of the layered reuse generator.
struct GenParams {
  int D = 2;          // max decomposition depth
  int b_eff = 2;      // unique branching per depth
  int r = 1;          // reuse factor: parent slots per node
  double alpha = 0.5; // solver-length contraction per depth
  double K0 = 8.0;    // base solver length
  std::vector<double> term_profile;  // size D+1; empty = terminal iff depth == D
  int M = 4;          // candidate-set size
  double beta = 2.0;  // margin exponent; +inf collapses the law onto g_max
  double C0 = 4.0;    // margin constant
  double rho = 0.02;  // probability floor
  int margin_k = 1;   // rank the gap is injected at
  bool randomized_parents = false;   // random distinct parents instead of round-robin
  bool homogeneous_classes = false;  // share conditionals across nodes at equal (type, depth, rem)
  // Flat decision points draw their own conditionals from the margin law by
  // default, realizing the flat-mixture margin assumption by construction.
  // With mirroring, every occurrence copies its uid's vector instead.
  bool mirror_flat = false;
  std::uint64_t seed = 0;

  double terminal_prob(int depth) const;
  void validate() const;  // throws ParameterError
};

// Latent proof DAG. Node ids are uids; nodes are stored root-first in
// depth-major order. `children` lists the child slots of a non-terminal node
// in expansion order: r*b_eff slots, possibly naming the same uid more than
// once when the parent layer is a single node.
struct DagNode {
  int uid = 0;
  int depth = 0;
  bool terminal = false;
  int solver_len = 0;           // L_u; 0 on non-terminal nodes
  std::vector<int> children;    // child slots (uids)
};

struct ProofDag {
  std::vector<DagNode> nodes;  // uid == index
  int root = 0;
  int max_depth = 0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  const DagNode& node(int uid) const { return nodes.at(static_cast<std::size_t>(uid)); }
  // Parent slot pairs (parent, child), with multiplicity.
  std::vector<std::pair<int, int>> edges() const;
  // Checks layering, in-degrees, terminal/solver consistency. Throws.
  void validate() const;
};

ProofDag sample_dag(const GenParams& params, Rng& rng);

// Latent sufficient statistics per depth d = 0..max_depth.
struct SuffStats {
  std::vector<long long> C;   // unique node count
  std::vector<long long> T;   // terminal node count
  std::vector<long long> S;   // total solver length over terminals
  std::vector<double> Lbar;   // S/T, 0 when T == 0

  int depths() const { return static_cast<int>(C.size()); }
};

SuffStats suff_stats(const ProofDag& z);

// Number of directed root-to-u paths per uid, parallel slots counted
// separately. Throws ResourceError past `cap`.
std::vector<long long> path_multiplicity(const ProofDag& z,
                                         long long cap = std::numeric_limits<long long>::max() / 4);

}  // namespace prooflab
