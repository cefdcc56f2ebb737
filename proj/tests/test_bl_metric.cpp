#include <doctest.h>

#include <cmath>

#include "prooflab/bl_metric.hpp"
#include "prooflab/parallel.hpp"
#include "test_helpers.hpp"

using namespace prooflab;
using namespace prooflab::testing;

namespace {

FiniteMetric two_points(double dist) {
  FiniteMetric m;
  m.n = 2;
  m.d = {0.0, dist, dist, 0.0};
  return m;
}

}  // namespace

TEST_CASE("identity: d(mu, mu) = 0") {
  Rng rng(1);
  FiniteMetric m = random_metric(6, rng);
  DiscreteMeasure mu;
  mu.points = {0, 2, 4};
  mu.mass = {1.0, 0.5, 2.0};
  BlResult res = d_bl_certified(mu, mu, m);
  CHECK(res.value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.duality_gap <= 1e-8);
}

TEST_CASE("unit dirac against the zero measure has distance 1") {
  Rng rng(2);
  FiniteMetric m = random_metric(4, rng);
  DiscreteMeasure dirac;
  dirac.points = {1};
  dirac.mass = {1.0};
  DiscreteMeasure zero;
  BlResult res = d_bl_certified(dirac, zero, m);
  CHECK(res.value == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(res.duality_gap <= 1e-8);
  // Optimum is attained by f == 1 at the dirac.
  CHECK(res.f[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("two unit diracs at distance d have distance min(d, 2)") {
  for (double dist : {0.3, 0.7, 1.0, 1.7, 2.0, 3.0, 10.0}) {
    FiniteMetric m = two_points(dist);
    DiscreteMeasure a;
    a.points = {0};
    a.mass = {1.0};
    DiscreteMeasure b;
    b.points = {1};
    b.mass = {1.0};
    BlResult res = d_bl_certified(a, b, m);
    CHECK(res.value == doctest::Approx(std::min(dist, 2.0)).epsilon(1e-10));
    CHECK(res.duality_gap <= 1e-8);
  }
}

TEST_CASE("metric axioms hold on randomized triples") {
  double worst = batch_bl_axiom_violation(500, 5, 3, ExecMode::Serial);
  CHECK(worst <= 1e-8);
}

TEST_CASE("mass-difference lower bound and total-mass upper bound") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    FiniteMetric m = random_metric(8, rng);
    auto rand_measure = [&](int k) {
      DiscreteMeasure out;
      for (int i = 0; i < k; ++i) {
        out.points.push_back(rng.uniform_int(m.n));
        out.mass.push_back(rng.uniform(0.0, 1.5));
      }
      return out;
    };
    DiscreteMeasure a = rand_measure(3);
    DiscreteMeasure b = rand_measure(4);
    double v = d_bl(a, b, m);
    CHECK(v >= std::abs(a.total() - b.total()) - 1e-9);  // witness f == +-1
    CHECK(v <= a.total() + b.total() + 1e-9);            // |f| <= 1
  }
}

TEST_CASE("primal solution is feasible") {
  Rng rng(5);
  FiniteMetric m = random_metric(10, rng);
  DiscreteMeasure a;
  a.points = {0, 1, 2, 3};
  a.mass = {1.0, 0.25, 0.5, 2.0};
  DiscreteMeasure b;
  b.points = {2, 5, 7};
  b.mass = {1.5, 0.75, 0.5};
  BlResult res = d_bl_certified(a, b, m);
  CHECK(res.duality_gap <= 1e-8);
  for (std::size_t i = 0; i < res.f.size(); ++i) {
    CHECK(std::abs(res.f[i]) <= 1.0 + 1e-9);
    for (std::size_t j = 0; j < res.f.size(); ++j) {
      CHECK(std::abs(res.f[i] - res.f[j]) <=
            m.at(res.support[i], res.support[j]) + 1e-9);
    }
  }
}

TEST_CASE("goal embedding") {
  auto embed = [](const GoalToken& g) { return g.uid % 3; };

  SUBCASE("solved state maps to the zero measure") {
    DiscreteMeasure m = goal_embed({}, embed);
    CHECK(m.points.empty());
    CHECK(m.total() == 0.0);
  }

  SUBCASE("identical goals stack their mass") {
    std::vector<GoalToken> goals(3);
    for (auto& g : goals) g.uid = 6;  // all map to point 0
    DiscreteMeasure m = goal_embed(goals, embed);
    REQUIRE(m.points.size() == 1);
    CHECK(m.mass[0] == doctest::Approx(3.0));
  }

  SUBCASE("removing one goal moves the measure by at least 1") {
    Rng rng(6);
    FiniteMetric metric = random_metric(3, rng);
    std::vector<GoalToken> goals(4);
    for (int i = 0; i < 4; ++i) goals[static_cast<std::size_t>(i)].uid = i;
    DiscreteMeasure full = goal_embed(goals, embed);
    goals.pop_back();
    DiscreteMeasure less = goal_embed(goals, embed);
    // f == 1 witnesses at least the mass difference.
    CHECK(d_bl(full, less, metric) >= 1.0 - 1e-9);
  }
}

TEST_CASE("oversized supports and inconsistent metrics are rejected") {
  FiniteMetric bad = two_points(1.0);
  bad.d[1] = 2.0;  // asymmetric
  DiscreteMeasure a;
  a.points = {0};
  a.mass = {1.0};
  DiscreteMeasure b;
  b.points = {1};
  b.mass = {1.0};
  CHECK_THROWS_AS(d_bl(a, b, bad), ContractError);

  Rng rng(7);
  FiniteMetric m = random_metric(70, rng);
  DiscreteMeasure big;
  for (int i = 0; i < 70; ++i) {
    big.points.push_back(i);
    big.mass.push_back(1.0);
  }
  CHECK_THROWS_AS(d_bl(big, DiscreteMeasure{}, m), ResourceError);
}

TEST_CASE("embedded kernel states give sensible distances") {
  Env env = make_env(default_params(), 8);
  const Kernel& k = env.hier_strict;
  Rng rng(9);
  FiniteMetric metric = random_metric(8, rng);
  auto embed = [&](const GoalToken& g) { return g.uid % metric.n; };
  DiscreteMeasure start = goal_embed(k.node(0).goals, embed);
  DiscreteMeasure solved = goal_embed({}, embed);
  // One open goal at the start: distance to solved is exactly 1.
  CHECK(d_bl(start, solved, metric) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("simplex optimum matches a dense grid search on small supports") {
  // Independent oracle: exhaustive grid over the test function f in [-1,1]^3
  // subject to the Lipschitz constraints; the LP value can only exceed the
  // grid value, and by no more than the grid resolution allows.
  Rng rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    FiniteMetric m = random_metric(3, rng);
    DiscreteMeasure mu, nu;
    for (int i = 0; i < 3; ++i) {
      if (rng.uniform01() < 0.7) {
        mu.points.push_back(i);
        mu.mass.push_back(rng.uniform(0.0, 2.0));
      }
      if (rng.uniform01() < 0.7) {
        nu.points.push_back(i);
        nu.mass.push_back(rng.uniform(0.0, 2.0));
      }
    }
    BlResult lp = d_bl_certified(mu, nu, m);
    CHECK(lp.duality_gap <= 1e-8);

    std::vector<double> c(3, 0.0);
    for (std::size_t i = 0; i < mu.points.size(); ++i) {
      c[static_cast<std::size_t>(mu.points[i])] += mu.mass[i];
    }
    for (std::size_t i = 0; i < nu.points.size(); ++i) {
      c[static_cast<std::size_t>(nu.points[i])] -= nu.mass[i];
    }
    const int steps = 60;
    double best = -1e300;
    for (int a = 0; a <= steps; ++a) {
      for (int b = 0; b <= steps; ++b) {
        for (int d = 0; d <= steps; ++d) {
          double f[3] = {-1.0 + 2.0 * a / steps, -1.0 + 2.0 * b / steps,
                         -1.0 + 2.0 * d / steps};
          bool feasible = true;
          for (int i = 0; i < 3 && feasible; ++i) {
            for (int j = 0; j < 3; ++j) {
              if (std::abs(f[i] - f[j]) > m.at(i, j)) {
                feasible = false;
                break;
              }
            }
          }
          if (!feasible) continue;
          best = std::max(best, c[0] * f[0] + c[1] * f[1] + c[2] * f[2]);
        }
      }
    }
    // Grid resolution bound: each coordinate moves by at most 2/steps, so the
    // objective cannot be further than sum |c_i| * 2/steps from the optimum.
    double tol = (std::abs(c[0]) + std::abs(c[1]) + std::abs(c[2])) * 2.0 / steps + 1e-9;
    CHECK(lp.value >= best - 1e-9);
    CHECK(lp.value <= best + tol);
  }
}
