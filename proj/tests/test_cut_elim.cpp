#include <doctest.h>

#include <algorithm>
#include <set>

#include "prooflab/cut_elim.hpp"
#include "test_helpers.hpp"

using namespace prooflab;
using namespace prooflab::testing;

namespace {

GenParams unit_length_params(int D, int b, int r) {
  GenParams p = default_params();
  p.D = D;
  p.b_eff = b;
  p.r = r;
  p.K0 = 1.0;  // mean <= 1 at every depth: all solver lengths are exactly 1
  return p;
}

}  // namespace

TEST_CASE("tree-shaped DAG unfolds to an isomorphic tree") {
  GenParams p = default_params();
  p.r = 1;
  Rng rng(1);
  ProofDag z = sample_dag(p, rng);
  ProofTree t = unfold(z);
  CHECK(t.num_nodes() == z.num_nodes());
  DecisionCounts dc = decision_counts(z, t);
  CHECK(dc.n_flat == dc.n_hier);
}

TEST_CASE("occurrences per depth are (r b_eff)^d") {
  GenParams p = default_params();  // D=2, b=2, r=2
  Rng rng(2);
  ProofDag z = sample_dag(p, rng);
  ProofTree t = unfold(z);
  DecisionCounts dc = decision_counts(z, t);
  REQUIRE(dc.occ_by_depth.size() == 3);
  CHECK(dc.occ_by_depth[0] == 1);
  CHECK(dc.occ_by_depth[1] == 4);
  CHECK(dc.occ_by_depth[2] == 16);
}

TEST_CASE("occurrence count of every uid equals its path multiplicity") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenParams p = default_params();
    p.D = 3;
    Rng rng(30 + seed);
    ProofDag z = sample_dag(p, rng);
    ProofTree t = unfold(z);
    auto mult = path_multiplicity(z);
    std::vector<long long> occ(static_cast<std::size_t>(z.num_nodes()), 0);
    for (const TreeNode& node : t.nodes) occ[static_cast<std::size_t>(node.uid)]++;
    for (int u = 0; u < z.num_nodes(); ++u) {
      CHECK(occ[static_cast<std::size_t>(u)] == mult[static_cast<std::size_t>(u)]);
    }
  }
}

TEST_CASE("decision counts on the worked D=3 example") {
  // D=3, b_eff=2, r=2, terminals only at depth 3, unit solver lengths.
  GenParams p = unit_length_params(3, 2, 2);
  Rng rng(3);
  ProofDag z = sample_dag(p, rng);
  ProofTree t = unfold(z);
  DecisionCounts dc = decision_counts(z, t);
  CHECK(dc.n_dec == 7);    // 1 + 2 + 4 unique non-terminals
  CHECK(dc.n_sol == 8);    // 8 unique terminals, L = 1
  CHECK(dc.n_hier == 15);
  // Flat: 1 + 4 + 16 = 21 non-terminal occurrences plus 64 unit terminals.
  CHECK(dc.occ_by_depth[0] + dc.occ_by_depth[1] + dc.occ_by_depth[2] == 21);
  CHECK(dc.n_flat == 21 + 64);
}

TEST_CASE("flat/hier ratio grows with depth under reuse") {
  double prev_ratio = 0.0;
  for (int D = 1; D <= 4; ++D) {
    GenParams p = unit_length_params(D, 2, 2);
    Rng rng(40 + static_cast<std::uint64_t>(D));
    ProofDag z = sample_dag(p, rng);
    ProofTree t = unfold(z);
    DecisionCounts dc = decision_counts(z, t);
    double ratio = static_cast<double>(dc.n_flat) / static_cast<double>(dc.n_hier);
    CHECK(ratio > prev_ratio);
    prev_ratio = ratio;
  }
}

TEST_CASE("re-canonicalizing the unfolded tree recovers the DAG") {
  GenParams p = default_params();
  p.D = 3;
  Rng rng(5);
  ProofDag z = sample_dag(p, rng);
  ProofTree t = unfold(z);
  ProofDag back = recanonicalize(z, t);
  REQUIRE(back.num_nodes() == z.num_nodes());
  for (int u = 0; u < z.num_nodes(); ++u) {
    auto uu = static_cast<std::size_t>(u);
    CHECK(back.nodes[uu].uid == z.nodes[uu].uid);
    CHECK(back.nodes[uu].depth == z.nodes[uu].depth);
    CHECK(back.nodes[uu].terminal == z.nodes[uu].terminal);
    CHECK(back.nodes[uu].children == z.nodes[uu].children);
  }
}

TEST_CASE("unfold refuses to exceed the size cap") {
  GenParams p = default_params();
  p.D = 3;
  Rng rng(6);
  ProofDag z = sample_dag(p, rng);
  CHECK_THROWS_AS(unfold(z, 10), ResourceError);
}
