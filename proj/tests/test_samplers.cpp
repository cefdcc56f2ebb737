#include <doctest.h>

#include <cmath>
#include <memory>

#include "prooflab/instance.hpp"
#include "prooflab/samplers.hpp"
#include "test_helpers.hpp"

using namespace prooflab;
using namespace prooflab::testing;

namespace {

// One state, two actions: good reaches G in one step, bad fails.
Kernel two_action_kernel() {
  Kernel k;
  auto classes = std::make_shared<ClassTable>();
  DecisionClass dc;
  dc.key = "s0";
  dc.num_candidates = 2;
  dc.reference = 0;
  classes->classes.push_back(dc);
  Kernel::Node n;
  n.cls = 0;
  n.next = {kSuccessNode, kFailureNode};
  k.nodes.push_back(n);
  k.start = 0;
  k.classes = classes;
  return k;
}

}  // namespace

TEST_CASE("success-to-go: terminal conventions and the hand example") {
  Kernel k = two_action_kernel();
  FixedPolicy q{{0.3, 0.7}};
  SuccessToGo h = success_to_go(k, q.fn(), 3);
  CHECK(h.at(0, kSuccessNode) == 1.0);
  CHECK(h.at(3, kSuccessNode) == 1.0);
  CHECK(h.at(2, kFailureNode) == 0.0);
  CHECK(h.at(0, 0) == 0.0);
  CHECK(h.at(1, 0) == doctest::Approx(0.3).epsilon(1e-14));
  // G absorbing: longer horizons keep the same value here.
  CHECK(h.at(2, 0) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("success-to-go matches monte carlo on a random instance") {
  Rng rng(501);
  RandomMdp inst = random_mdp({}, rng);
  const int L = 6;
  SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
  double v = h.at(L, inst.kernel.start);
  Rng mc(502);
  const int n = 100000;
  int wins = 0;
  for (int i = 0; i < n; ++i) {
    wins += rollout(inst.kernel, inst.q(), L, inst.kernel.start, mc).successful() ? 1 : 0;
  }
  double phat = static_cast<double>(wins) / n;
  double se = std::sqrt(std::max(v * (1.0 - v), 1e-12) / n);
  CHECK(std::abs(phat - v) <= 3.0 * se + 1e-9);
}

TEST_CASE("doob policy: conditioning forces the good action") {
  Kernel k = two_action_kernel();
  FixedPolicy q{{0.3, 0.7}};
  SuccessToGo h = success_to_go(k, q.fn(), 1);
  DoobPolicy qstar(k, q.fn(), h);
  auto row = qstar.probs(1, 0);
  CHECK(row[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(row[1] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("doob policy equals q when every action succeeds") {
  Kernel k;
  auto classes = std::make_shared<ClassTable>();
  DecisionClass dc;
  dc.key = "s0";
  dc.num_candidates = 3;
  classes->classes.push_back(dc);
  Kernel::Node n;
  n.cls = 0;
  n.next = {kSuccessNode, kSuccessNode, kSuccessNode};
  k.nodes.push_back(n);
  k.start = 0;
  k.classes = classes;
  FixedPolicy q{{0.2, 0.5, 0.3}};
  SuccessToGo h = success_to_go(k, q.fn(), 1);
  DoobPolicy qstar(k, q.fn(), h);
  auto row = qstar.probs(1, 0);
  for (int a = 0; a < 3; ++a) {
    CHECK(row[static_cast<std::size_t>(a)] ==
          doctest::Approx(q.row[static_cast<std::size_t>(a)]).epsilon(1e-14));
  }
}

TEST_CASE("doob policy throws on null conditioning") {
  Kernel k;
  auto classes = std::make_shared<ClassTable>();
  DecisionClass dc;
  dc.key = "dead";
  dc.num_candidates = 2;
  classes->classes.push_back(dc);
  Kernel::Node n;
  n.cls = 0;
  n.next = {kFailureNode, kFailureNode};
  k.nodes.push_back(n);
  k.start = 0;
  k.classes = classes;
  FixedPolicy q{{0.5, 0.5}};
  SuccessToGo h = success_to_go(k, q.fn(), 2);
  DoobPolicy qstar(k, q.fn(), h);
  CHECK_THROWS_AS(qstar.probs(1, 0), ConditioningError);
}

TEST_CASE("doob path law equals the enumerated success-conditioned law") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(600 + seed);
    RandomMdpParams params;
    params.num_layers = 4;
    params.width = 3;
    params.num_candidates = 3;
    RandomMdp inst = random_mdp(params, rng);
    const int L = 5;
    SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
    if (h.at(L, inst.kernel.start) <= 0.0) continue;
    DoobPolicy qstar(inst.kernel, inst.q(), h);
    PathLaw cond = enumerate_paths(inst.kernel, inst.q(), L, inst.kernel.start, true);
    PathLaw doob = doob_path_law(inst.kernel, qstar, L, inst.kernel.start);
    CHECK(total_variation(cond, doob) <= 1e-10);
  }
}

TEST_CASE("telescoping identity holds on sampled doob traces") {
  Rng rng(700);
  RandomMdp inst = random_mdp({}, rng);
  const int L = 6;
  SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
  REQUIRE(h.at(L, inst.kernel.start) > 0.0);
  DoobPolicy qstar(inst.kernel, inst.q(), h);
  PolicyFn q = inst.q();
  Rng sampler(701);
  for (int i = 0; i < 200; ++i) {
    Trace t = doob_rollout(inst.kernel, qstar, inst.kernel.start, sampler);
    REQUIRE(t.successful());
    double star = 0.0, base = 0.0;
    for (const TraceStep& s : t.steps) {
      star += std::log(qstar.probs(L - s.t, s.node)[static_cast<std::size_t>(s.choice)]);
      base += std::log(q(s.cls)[static_cast<std::size_t>(s.choice)]);
    }
    double rhs = base - std::log(h.at(L, inst.kernel.start));
    CHECK(star == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("exact twist: constant weights, full success, no resampling") {
  Rng rng(800);
  RandomMdp inst = random_mdp({}, rng);
  const int L = 6;
  SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
  REQUIRE(h.at(L, inst.kernel.start) > 0.0);
  SmcOptions opt;
  opt.num_particles = 256;
  Rng smc_rng(801);
  for (int rep = 0; rep < 20; ++rep) {
    SmcResult res = twisted_smc(inst.kernel, inst.q(), exact_twist(h), L, opt,
                                inst.kernel.start, smc_rng);
    REQUIRE(res.found);
    CHECK(res.trace.successful());
    for (double v : res.logw_variance) CHECK(v <= 1e-12);
    for (char r : res.resampled) CHECK(r == 0);
    for (double e : res.ess) CHECK(e == doctest::Approx(opt.num_particles).epsilon(1e-9));
    CHECK(res.final_alive_fraction == 1.0);
  }
}

TEST_CASE("unit twist reduces to bootstrap with acceptance near h_L") {
  Rng rng(900);
  RandomMdpParams params;
  params.fail_prob = 0.3;
  RandomMdp inst = random_mdp(params, rng);
  const int L = 6;
  SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
  double target = h.at(L, inst.kernel.start);
  REQUIRE(target > 0.0);
  SmcOptions opt;
  opt.num_particles = 4000;
  opt.ess_frac = 0.0;  // disable resampling so alive fraction estimates h_L
  Rng smc_rng(901);
  SmcResult res = twisted_smc(inst.kernel, inst.q(), constant_twist(), L, opt,
                              inst.kernel.start, smc_rng);
  double se = std::sqrt(target * (1.0 - target) / opt.num_particles);
  CHECK(std::abs(res.final_alive_fraction - target) <= 4.0 * se + 1e-9);
}

TEST_CASE("smc first-action law matches the doob policy") {
  Rng rng(1000);
  RandomMdp inst = random_mdp({}, rng);
  const int L = 5;
  SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
  REQUIRE(h.at(L, inst.kernel.start) > 0.0);
  DoobPolicy qstar(inst.kernel, inst.q(), h);
  auto doob_row = qstar.probs(L, inst.kernel.start);
  SmcOptions opt;
  opt.num_particles = 64;
  Rng smc_rng(1001);
  std::vector<double> freq(doob_row.size(), 0.0);
  const int n = 20000;
  int got = 0;
  for (int i = 0; i < n; ++i) {
    SmcResult res = twisted_smc(inst.kernel, inst.q(), exact_twist(h), L, opt,
                                inst.kernel.start, smc_rng);
    if (!res.found || res.trace.steps.empty()) continue;
    freq[static_cast<std::size_t>(res.trace.steps.front().choice)] += 1.0;
    got++;
  }
  REQUIRE(got > 0);
  double tv = 0.0;
  for (std::size_t a = 0; a < freq.size(); ++a) {
    tv += std::abs(freq[a] / got - doob_row[a]);
  }
  CHECK(tv / 2.0 <= 0.02);
}

TEST_CASE("smc reports no survivor instead of crashing") {
  // Success unreachable within the horizon.
  Kernel k = chain_kernel(4);
  FixedPolicy q{{0.5, 0.5}};
  SmcOptions opt;
  opt.num_particles = 32;
  Rng rng(1100);
  SmcResult res = twisted_smc(k, q.fn(), constant_twist(), 2, opt, k.start, rng);
  CHECK_FALSE(res.found);
  CHECK(res.final_alive_fraction == 0.0);
}

TEST_CASE("negative twist is a contract violation") {
  Kernel k = chain_kernel(2);
  FixedPolicy q{{0.5, 0.5}};
  SmcOptions opt;
  Rng rng(1200);
  TwistFn bad = [](int, std::int32_t) { return -1.0; };
  CHECK_THROWS_AS(twisted_smc(k, q.fn(), bad, 2, opt, k.start, rng), ContractError);
}

TEST_CASE("smc traces are kernel-consistent after ancestor reconstruction") {
  Rng rng(1300);
  RandomMdp inst = random_mdp({}, rng);
  const int L = 6;
  SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
  REQUIRE(h.at(L, inst.kernel.start) > 0.0);
  SmcOptions opt;
  opt.num_particles = 64;
  opt.ess_frac = 0.9;  // force frequent resampling to stress the genealogy
  Rng smc_rng(1301);
  TwistFn trunc = truncated_twist(inst.kernel, inst.q(), 2);
  for (int rep = 0; rep < 50; ++rep) {
    SmcResult res = twisted_smc(inst.kernel, inst.q(), trunc, L, opt, inst.kernel.start,
                                smc_rng);
    if (!res.found) continue;
    std::int32_t cur = inst.kernel.start;
    for (const TraceStep& s : res.trace.steps) {
      CHECK(s.node == cur);
      cur = step(inst.kernel, cur, s.choice);
    }
    CHECK(cur == kSuccessNode);
  }
}

TEST_CASE("doob sampling works on compiled proof instances") {
  Env env = make_env(default_params(), 31);
  const Kernel& k = env.hier_strict;
  const int L = k.num_nodes();
  PolicyFn q = env.hier_q.policy();
  SuccessToGo h = success_to_go(k, q, L);
  REQUIRE(h.at(L, k.start) > 0.0);
  DoobPolicy qstar(k, q, h);
  Rng rng(32);
  Trace t = doob_rollout(k, qstar, k.start, rng);
  CHECK(t.successful());
  CHECK(t.length() == L);
  // The strict instance has a unique success path: the reference actions.
  for (const TraceStep& s : t.steps) {
    CHECK(s.choice == k.classes->at(s.cls).reference);
  }
}
