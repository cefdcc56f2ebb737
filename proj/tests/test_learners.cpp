#include <doctest.h>

#include <cmath>

#include "prooflab/learners.hpp"
#include "test_helpers.hpp"

using namespace prooflab;
using namespace prooflab::testing;

TEST_CASE("floor-projected MLE worked examples") {
  {
    std::vector<double> counts{10, 0, 0};
    auto p = floor_projected_mle({counts.data(), counts.size()}, 3, 0.1);
    CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(0.1).epsilon(1e-12));
  }
  {
    std::vector<double> counts{5, 5, 5, 5};
    auto p = floor_projected_mle({counts.data(), counts.size()}, 4, 0.05);
    for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
  }
  {
    std::vector<double> counts{3, 1};
    auto p = floor_projected_mle({counts.data(), counts.size()}, 2, 0.0);
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));
  }
  {
    std::vector<double> counts{0, 0};
    auto p = floor_projected_mle({counts.data(), counts.size()}, 2, 0.1);
    CHECK(p[0] == doctest::Approx(0.5));
  }
}

TEST_CASE("floor-projected MLE beats a dense grid search") {
  // Independent oracle: exhaustive simplex grid.
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> counts(3);
    for (double& c : counts) c = static_cast<double>(rng.uniform_int(12));
    double total = counts[0] + counts[1] + counts[2];
    if (total == 0.0) continue;
    double rho = 0.08;
    auto p = floor_projected_mle({counts.data(), counts.size()}, 3, rho);
    double got = 0.0;
    for (int i = 0; i < 3; ++i) {
      CHECK(p[static_cast<std::size_t>(i)] >= rho - 1e-12);
      if (counts[static_cast<std::size_t>(i)] > 0) {
        got += counts[static_cast<std::size_t>(i)] * std::log(p[static_cast<std::size_t>(i)]);
      }
    }
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
    double best = -1e300;
    const int steps = 400;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps - i; ++j) {
        double a = rho + (1.0 - 3 * rho) * i / steps;
        double b = rho + (1.0 - 3 * rho) * j / steps;
        double c = 1.0 - a - b;
        if (c < rho - 1e-12) continue;
        double v = 0.0;
        if (counts[0] > 0) v += counts[0] * std::log(a);
        if (counts[1] > 0) v += counts[1] * std::log(b);
        if (counts[2] > 0) v += counts[2] * std::log(c);
        best = std::max(best, v);
      }
    }
    CHECK(got >= best - 1e-4);
  }
}

TEST_CASE("erm_fit recovers the conditionals as data grows") {
  Env env = make_env(default_params(), 51);
  Rng rng(52);
  Dataset data = sample_dataset(env, Mode::Hier, 4000, rng);
  FitOptions opt;
  opt.rho = env.params.rho;
  TabularPolicy fit = erm_fit(*env.hier.table, data, opt);
  auto weights = exact_class_weights(*env.hier.table);
  double kl = mixture_kl(fit.view(), env.hier_q, weights);
  CHECK(kl < 0.01);
}

TEST_CASE("erm_fit with a type filter leaves other classes uniform") {
  Env env = make_env(default_params(), 53);
  Rng rng(54);
  Dataset data = sample_dataset(env, Mode::Hier, 50, rng);
  FitOptions opt;
  opt.rho = 0.0;
  opt.type_filter = DecisionType::Sol;
  TabularPolicy fit = erm_fit(*env.hier.table, data, opt);
  for (int c = 0; c < env.hier.table->size(); ++c) {
    if (env.hier.table->at(c).type == DecisionType::Dec) {
      for (double v : fit.rows[static_cast<std::size_t>(c)]) {
        CHECK(v == doctest::Approx(1.0 / env.params.M));
      }
    }
  }
}

TEST_CASE("mixture KL worked example and identity") {
  // Single state, q = (0.7, 0.3), pi = (0.5, 0.5).
  GeneratorConditionals q;
  q.probs = {{0.7, 0.3}};
  q.gaps = {0.4};
  TabularPolicy pi;
  pi.rows = {{0.5, 0.5}};
  std::vector<double> w{1.0};
  double kl = mixture_kl(pi.view(), q, w);
  CHECK(kl == doctest::Approx(0.0822828785050518).epsilon(1e-10));
  CHECK(mixture_kl(q.policy(), q, w) == doctest::Approx(0.0).epsilon(1e-15));
  // Risk identity R(pi) = R(q) + KLbar.
  double lhs = expected_risk(pi.view(), q, w) - expected_risk(q.policy(), q, w);
  CHECK(lhs == doctest::Approx(kl).epsilon(1e-12));
}

TEST_CASE("risk identity holds on sampled datasets to 1e-10") {
  Env env = make_env(default_params(), 55);
  Rng rng(56);
  Dataset data = sample_dataset(env, Mode::Flat, 100, rng);
  GeneratorConditionals qhat = empirical_conditionals(data, *env.flat.table);
  auto weights = empirical_class_weights(data, env.flat.table->size());
  FitOptions opt;
  opt.rho = 0.01;
  TabularPolicy pi = erm_fit(*env.flat.table, data, opt);
  double lhs = empirical_risk(data, pi.view());
  // R(qhat) under the same dataset plus the mixture KL w.r.t. qhat.
  double rq = expected_risk(qhat.policy(), qhat, weights);
  double kl = mixture_kl(pi.view(), qhat, weights);
  CHECK(lhs == doctest::Approx(rq + kl).epsilon(1e-10));
}

TEST_CASE("pinsker consequence holds per class") {
  Env env = make_env(default_params(), 57);
  Rng rng(58);
  Dataset data = sample_dataset(env, Mode::Hier, 30, rng);
  FitOptions opt;
  opt.rho = env.params.rho;
  TabularPolicy pi = erm_fit(*env.hier.table, data, opt);
  for (int c = 0; c < env.hier.table->size(); ++c) {
    auto uc = static_cast<std::size_t>(c);
    const auto& qrow = env.hier_q.probs[uc];
    const auto& prow = pi.rows[uc];
    double linf = 0.0, kl = 0.0;
    for (std::size_t a = 0; a < qrow.size(); ++a) {
      linf = std::max(linf, std::abs(qrow[a] - prow[a]));
      kl += qrow[a] * (std::log(qrow[a]) - std::log(prow[a]));
    }
    CHECK(linf * linf <= 2.0 * kl + 1e-12);
  }
}

TEST_CASE("coarsened classes pool counts by (type, depth, remaining)") {
  GenParams p = default_params();
  Env env = make_env(p, 59);
  Rng rng(60);
  Dataset data = sample_dataset(env, Mode::Hier, 200, rng);
  auto grouping = coarse_group_by_depth(*env.hier.table);
  FitOptions opt;
  opt.rho = p.rho;
  opt.class_group = &grouping;
  TabularPolicy coarse = erm_fit(*env.hier.table, data, opt);
  // Classes in one group share a row.
  for (int c1 = 0; c1 < env.hier.table->size(); ++c1) {
    for (int c2 = c1 + 1; c2 < env.hier.table->size(); ++c2) {
      if (grouping[static_cast<std::size_t>(c1)] == grouping[static_cast<std::size_t>(c2)]) {
        CHECK(coarse.rows[static_cast<std::size_t>(c1)] ==
              coarse.rows[static_cast<std::size_t>(c2)]);
      }
    }
  }
  // The coarse class is misspecified: its best KL stays bounded away from 0.
  Dataset big = sample_dataset(env, Mode::Hier, 3000, rng);
  TabularPolicy coarse_big = erm_fit(*env.hier.table, big, opt);
  auto weights = exact_class_weights(*env.hier.table);
  double kl = mixture_kl(coarse_big.view(), env.hier_q, weights);
  CHECK(kl > 0.005);
}

TEST_CASE("moment estimators on noiseless statistics") {
  // Exact C = (1, 2, 4, 8) forces b_hat = 2; Lbar = (8, 4, 2) forces alpha = 0.5.
  SuffStats s;
  s.C = {1, 2, 4, 8};
  s.T = {1, 1, 1, 8};
  s.S = {8, 4, 2, 8};
  s.Lbar = {8, 4, 2, 1};
  MomentEstimates est = estimate_structure({s});
  CHECK(est.b_eff_hat == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(est.alpha_hat == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(est.b_eff_reg == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(est.alpha_reg == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("aggregated-only statistics identify just the product") {
  // S_d from the uniform moment model with b_eff = 2, alpha = 0.5:
  // S_d proportional to (b_eff alpha)^d = 1^d.
  std::vector<std::vector<double>> s{{4.0, 4.0, 4.0}};
  MomentEstimates est = estimate_structure_aggregated(s);
  CHECK(est.product_hat == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(est.individual_recoverable);
  CHECK(est.aggregated_only);
  CHECK(std::isnan(est.b_eff_hat));
  CHECK(std::isnan(est.alpha_hat));
}

TEST_CASE("estimators are exact on sampled default-profile DAGs") {
  GenParams p = default_params();
  p.D = 3;
  std::vector<SuffStats> stats;
  Rng rng(61);
  for (int i = 0; i < 50; ++i) stats.push_back(suff_stats(sample_dag(p, rng)));
  MomentEstimates est = estimate_structure(stats);
  // Unique-node counts are deterministic, so the ratio is exactly b_eff.
  CHECK(est.b_eff_hat == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("alpha is recovered from mixed-profile samples at n = 1000") {
  GenParams p = default_params();
  p.D = 2;
  p.term_profile = {0.0, 0.5, 1.0};
  p.K0 = 8.0;
  p.alpha = 0.5;
  std::vector<SuffStats> stats;
  Rng rng(62);
  for (int i = 0; i < 1000; ++i) stats.push_back(suff_stats(sample_dag(p, rng)));
  MomentEstimates est = estimate_structure(stats);
  CHECK(std::abs(est.alpha_hat - 0.5) <= 0.05);
  // Error shrinks like 1/sqrt(n): log-log slope over three sizes, with the
  // per-size error taken as a median over independent replicates.
  std::vector<int> ns{100, 1000, 10000};
  std::vector<double> log_err;
  Rng r2(63);
  for (int n : ns) {
    std::vector<double> errs;
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<SuffStats> block;
      for (int i = 0; i < n; ++i) block.push_back(suff_stats(sample_dag(p, r2)));
      errs.push_back(std::abs(estimate_structure(block).alpha_hat - 0.5) + 1e-9);
    }
    std::sort(errs.begin(), errs.end());
    log_err.push_back(std::log(errs[2]));
  }
  double x0 = std::log(100.0), x2 = std::log(10000.0);
  double slope = (log_err[2] - log_err[0]) / (x2 - x0);
  CHECK(slope < -0.25);
  CHECK(slope > -1.0);
}
