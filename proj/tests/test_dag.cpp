#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "prooflab/dag.hpp"
#include "prooflab/instance.hpp"
#include "test_helpers.hpp"

using namespace prooflab;
using namespace prooflab::testing;

namespace {

// Brute-force oracle: counts root-to-uid slot paths by explicit DFS.
long long count_paths(const ProofDag& z, int target) {
  long long count = 0;
  std::function<void(int)> walk = [&](int uid) {
    if (uid == target) count++;
    for (int c : z.node(uid).children) walk(c);
  };
  walk(z.root);
  return count;
}

}  // namespace

TEST_CASE("degenerate tree: D=2 b=1 r=1 is a 3-node chain") {
  GenParams p = default_params();
  p.b_eff = 1;
  p.r = 1;
  Rng rng(1);
  ProofDag z = sample_dag(p, rng);
  CHECK(z.num_nodes() == 3);
  CHECK(z.edges().size() == 2);
  CHECK(z.max_depth == 2);
}

TEST_CASE("uniform D=2 b=2 r=2 has 7 nodes and 12 edges") {
  GenParams p = default_params();
  Rng rng(2);
  ProofDag z = sample_dag(p, rng);
  CHECK(z.num_nodes() == 7);
  CHECK(z.edges().size() == 12);
  SuffStats s = suff_stats(z);
  REQUIRE(s.depths() == 3);
  CHECK(s.C[0] == 1);
  CHECK(s.C[1] == 2);
  CHECK(s.C[2] == 4);
}

TEST_CASE("insufficient distinct parents is a parameter error") {
  GenParams p = default_params();
  p.b_eff = 1;
  p.r = 2;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  Rng rng(3);
  CHECK_THROWS_AS(sample_dag(p, rng), ParameterError);
}

TEST_CASE("sampled DAGs pass the structural validator") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GenParams p = default_params();
    p.D = 1 + static_cast<int>(seed % 3);
    p.b_eff = 1 + static_cast<int>(seed % 2);
    p.r = p.b_eff;  // feasible cells
    Rng rng(100 + seed);
    ProofDag z = sample_dag(p, rng);
    CHECK_NOTHROW(z.validate());
    // Unique-node counts are deterministic under the default profile.
    SuffStats s = suff_stats(z);
    for (int d = 0; d + 1 < s.depths(); ++d) {
      CHECK(s.C[static_cast<std::size_t>(d + 1)] ==
            p.b_eff * s.C[static_cast<std::size_t>(d)]);
    }
  }
}

TEST_CASE("suff stats on a hand-built chain with terminal length 5") {
  ProofDag z;
  z.root = 0;
  z.max_depth = 2;
  DagNode a;
  a.uid = 0;
  a.depth = 0;
  a.children = {1};
  DagNode b;
  b.uid = 1;
  b.depth = 1;
  b.children = {2};
  DagNode c;
  c.uid = 2;
  c.depth = 2;
  c.terminal = true;
  c.solver_len = 5;
  z.nodes = {a, b, c};
  SuffStats s = suff_stats(z);
  CHECK(s.C == std::vector<long long>{1, 1, 1});
  CHECK(s.T == std::vector<long long>{0, 0, 1});
  CHECK(s.S == std::vector<long long>{0, 0, 5});
  CHECK(s.Lbar[0] == 0.0);  // empty terminal depth convention
  CHECK(s.Lbar[2] == 5.0);
}

TEST_CASE("solver lengths have mean K0 alpha^d") {
  GenParams p = default_params();
  p.D = 1;
  p.b_eff = 2;
  p.r = 1;
  p.K0 = 8.0;
  p.alpha = 0.5;
  Rng rng(42);
  double total = 0.0;
  long long count = 0;
  for (int i = 0; i < 5000; ++i) {
    ProofDag z = sample_dag(p, rng);
    for (const DagNode& n : z.nodes) {
      if (n.terminal) {
        total += n.solver_len;
        count++;
      }
    }
  }
  double mean = total / static_cast<double>(count);
  // Geometric with mean 4: sd = sqrt(12) ~ 3.46.
  double se = 3.4641 / std::sqrt(static_cast<double>(count));
  CHECK(std::abs(mean - 4.0) <= 3.0 * se);
}

TEST_CASE("path multiplicity: root is 1, trees are all ones") {
  GenParams p = default_params();
  p.r = 1;
  Rng rng(7);
  ProofDag z = sample_dag(p, rng);
  auto mult = path_multiplicity(z);
  for (long long m : mult) CHECK(m == 1);
}

TEST_CASE("path multiplicity: uniform reuse gives (r b)^d total at each depth") {
  GenParams p = default_params();  // D=2 b=2 r=2
  Rng rng(8);
  ProofDag z = sample_dag(p, rng);
  auto mult = path_multiplicity(z);
  CHECK(mult[static_cast<std::size_t>(z.root)] == 1);
  long long depth2 = 0;
  for (const DagNode& n : z.nodes) {
    if (n.depth == 2) depth2 += mult[static_cast<std::size_t>(n.uid)];
  }
  CHECK(depth2 == 16);  // (r b_eff)^2
  CHECK(depth2 >= 4);   // >= r^2 lower bound
  // Cross-check against explicit path enumeration.
  for (const DagNode& n : z.nodes) {
    CHECK(mult[static_cast<std::size_t>(n.uid)] == count_paths(z, n.uid));
  }
}

TEST_CASE("randomized parents variant keeps in-degree r") {
  GenParams p = default_params();
  p.D = 3;
  p.b_eff = 3;
  p.r = 2;
  p.randomized_parents = true;
  Rng rng(9);
  ProofDag z = sample_dag(p, rng);
  z.validate();
  std::vector<int> indeg(static_cast<std::size_t>(z.num_nodes()), 0);
  for (auto [a, b] : z.edges()) {
    (void)a;
    indeg[static_cast<std::size_t>(b)]++;
  }
  for (const DagNode& n : z.nodes) {
    if (n.uid != z.root) CHECK(indeg[static_cast<std::size_t>(n.uid)] == p.r);
  }
}

// ---- Generator conditionals -------------------------------------------------------

TEST_CASE("margin rank profile solves the two-point system") {
  auto v = margin_rank_profile(2, 1, 0.1, 0.4);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("conditionals respect the floor and sum to one") {
  GenParams p = default_params();
  Rng rng(11);
  Env env = make_env(p, 11);
  for (const auto& row : env.hier_q.probs) {
    double total = 0.0;
    for (double x : row) {
      CHECK(x >= p.rho - 1e-15);
      total += x;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("reference action sits at rank 1 and the realized gap matches") {
  GenParams p = default_params();
  Env env = make_env(p, 13);
  for (int c = 0; c < env.hier.table->size(); ++c) {
    auto uc = static_cast<std::size_t>(c);
    const auto& row = env.hier_q.probs[uc];
    int ref = env.hier.table->at(c).reference;
    for (double x : row) CHECK(row[static_cast<std::size_t>(ref)] >= x - 1e-15);
    std::vector<double> sorted(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    CHECK(sorted[0] - sorted[1] == doctest::Approx(env.hier_q.gaps[uc]).epsilon(1e-9));
  }
}

TEST_CASE("degenerate beta puts every gap at g_max") {
  GenParams p = default_params();
  p.beta = std::numeric_limits<double>::infinity();
  Env env = make_env(p, 17);
  double g_max = (1.0 - p.rho * p.M) / p.margin_k;
  for (double g : env.hier_q.gaps) CHECK(g == doctest::Approx(g_max).epsilon(1e-12));
}

TEST_CASE("empirical gap CDF matches the designed margin law") {
  // Kolmogorov-Smirnov against min(1, C0 u^beta) on 1e5 draws.
  GenParams p = default_params();
  p.M = 2;
  p.rho = 0.1;
  p.C0 = 2.0;
  p.beta = 1.0;  // quantile range [0, 0.5], well inside g_max = 0.8
  ClassTable table;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    DecisionClass dc;
    dc.key = "synthetic";
    dc.num_candidates = p.M;
    dc.reference = 0;
    table.classes.push_back(dc);
  }
  Rng rng(19);
  GeneratorConditionals q = make_conditionals(table, p, rng);
  std::vector<double> gaps = q.gaps;
  std::sort(gaps.begin(), gaps.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = gaps[static_cast<std::size_t>(i)];
    double cdf = std::min(1.0, p.C0 * std::pow(u, p.beta));
    double emp_hi = static_cast<double>(i + 1) / n;
    double emp_lo = static_cast<double>(i) / n;
    ks = std::max(ks, std::max(std::abs(emp_hi - cdf), std::abs(emp_lo - cdf)));
  }
  CHECK(ks <= 0.02);
}

TEST_CASE("infeasible floor is a parameter error") {
  GenParams p = default_params();
  p.rho = 0.3;  // rho * M = 1.2 > 1
  CHECK_THROWS_AS(p.validate(), ParameterError);
}
