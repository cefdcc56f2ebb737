#include "prooflab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prooflab/cut_elim.hpp"
#include "prooflab/instance.hpp"
#include "prooflab/learners.hpp"
#include "prooflab/samplers.hpp"
#include "prooflab/search.hpp"
#include "prooflab/serialize.hpp"

namespace prooflab {

using nlohmann::json;

WilsonInterval wilson_interval(long long wins, long long trials, double z) {
  WilsonInterval w;
  if (trials <= 0) return w;
  double n = static_cast<double>(trials);
  double p = static_cast<double>(wins) / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

ExecMode exec_mode_from_config(const Config& cfg) {
  std::string mode = cfg.get_string("exec", "openmp");
  if (mode == "serial") return ExecMode::Serial;
  if (mode == "openmp") return ExecMode::OpenMP;
  throw ParseError("config key 'exec': expected serial or openmp");
}

GenParams gen_params_from_config(const Config& cfg) {
  GenParams p;
  p.D = static_cast<int>(cfg.get_int("gen.D", p.D));
  p.b_eff = static_cast<int>(cfg.get_int("gen.b_eff", p.b_eff));
  p.r = static_cast<int>(cfg.get_int("gen.r", p.r));
  p.alpha = cfg.get_double("gen.alpha", p.alpha);
  p.K0 = cfg.get_double("gen.K0", p.K0);
  p.M = static_cast<int>(cfg.get_int("gen.M", p.M));
  p.beta = cfg.get_double("gen.beta", p.beta);
  p.C0 = cfg.get_double("gen.C0", p.C0);
  p.rho = cfg.get_double("gen.rho", p.rho);
  p.margin_k = static_cast<int>(cfg.get_int("gen.margin_k", p.margin_k));
  p.term_profile = cfg.get_double_list("gen.term_profile", {});
  p.randomized_parents = cfg.get_bool("gen.randomized_parents", false);
  p.homogeneous_classes = cfg.get_bool("gen.homogeneous_classes", false);
  p.validate();
  return p;
}

namespace {

const std::set<std::string> kCommonKeys = {
    "experiment", "seed", "out", "trials", "exec",
    "gen.D", "gen.b_eff", "gen.r", "gen.alpha", "gen.K0", "gen.M", "gen.beta",
    "gen.C0", "gen.rho", "gen.margin_k", "gen.term_profile",
    "gen.randomized_parents", "gen.homogeneous_classes"};

std::set<std::string> with_common(std::initializer_list<std::string> extra) {
  std::set<std::string> keys = kCommonKeys;
  for (const auto& k : extra) keys.insert(k);
  return keys;
}

std::string iso_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json config_echo(const Config& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

std::string make_summary(const Config& cfg, const std::string& experiment, json summary) {
  json j;
  j["version"] = kVersion;
  j["experiment"] = experiment;
  j["generated_utc"] = iso_now();
  j["config"] = config_echo(cfg);
  j["summary"] = std::move(summary);
  return j.dump(2) + "\n";
}

struct CsvBuilder {
  std::ostringstream os;
  explicit CsvBuilder(const std::string& header) { os << header << '\n'; }
  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((os << (first ? "" : ","), first = false, emit(cells)), ...);
    os << '\n';
  }
  void emit(double v) { os << format_double(v); }
  void emit(const std::string& v) { os << v; }
  void emit(const char* v) { os << v; }
  void emit(long long v) { os << v; }
  void emit(int v) { os << v; }
  std::string str() const { return os.str(); }
};

TabularPolicy random_floored_policy(const ClassTable& classes, double rho, Rng& rng) {
  TabularPolicy p;
  p.rho = rho;
  p.rows.reserve(classes.classes.size());
  for (const DecisionClass& dc : classes.classes) {
    std::vector<double> row(static_cast<std::size_t>(dc.num_candidates));
    double total = 0.0;
    for (double& v : row) {
      v = -std::log(1.0 - rng.uniform01());
      total += v;
    }
    double mass = 1.0 - rho * dc.num_candidates;
    for (double& v : row) v = rho + mass * v / total;
    p.rows.push_back(std::move(row));
  }
  return p;
}

// Synthetic class table for margin-law statistics (no DAG attached).
ClassTable synthetic_classes(int n, int M, Rng& rng) {
  ClassTable table;
  table.classes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    DecisionClass dc;
    dc.key = "syn:" + std::to_string(i);
    dc.num_candidates = M;
    dc.reference = rng.uniform_int(M);
    table.classes.push_back(std::move(dc));
  }
  return table;
}

TabularPolicy per_class_fit(const ClassTable& table, const GeneratorConditionals& q, int n,
                            double rho, Rng& rng) {
  TabularPolicy fit;
  fit.rho = rho;
  fit.rows.resize(table.classes.size());
  for (int c = 0; c < table.size(); ++c) {
    auto uc = static_cast<std::size_t>(c);
    std::vector<double> counts(q.probs[uc].size(), 0.0);
    for (int i = 0; i < n; ++i) {
      counts[static_cast<std::size_t>(
          rng.categorical({q.probs[uc].data(), q.probs[uc].size()}))] += 1.0;
    }
    fit.rows[uc] = floor_projected_mle({counts.data(), counts.size()},
                                       static_cast<int>(counts.size()), rho);
  }
  return fit;
}

}  // namespace

// ---- verify-bounds ---------------------------------------------------------------

ExperimentResult run_verify_bounds(const Config& cfg) {
  cfg.require_known(with_common({"verify.margin_points", "verify.pair_points",
                                 "verify.instances", "verify.latent_instances",
                                 "verify.em_cycles", "verify.latent_pairs"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  ExecMode exec = exec_mode_from_config(cfg);
  GenParams params = gen_params_from_config(cfg);
  const long long margin_points = cfg.get_int("verify.margin_points", 120000);
  const long long pair_points = cfg.get_int("verify.pair_points", 120000);
  const int instances = static_cast<int>(cfg.get_int("verify.instances", 50));
  const int latent_instances = static_cast<int>(cfg.get_int("verify.latent_instances", 50));
  const int em_cycles = static_cast<int>(cfg.get_int("verify.em_cycles", 5));
  const int latent_pairs = static_cast<int>(cfg.get_int("verify.latent_pairs", 1000));

  CsvBuilder csv("suite,checks,violations,max_residual");
  json summary;
  long long total_violations = 0;

  // Margin chain + Pinsker on designed-margin conditionals against fitted and
  // random policies.
  {
    Rng rng = Rng::stream(seed, 1);
    int per_policy = static_cast<int>(margin_points / 4);
    ClassTable table = synthetic_classes(per_policy, params.M, rng);
    GeneratorConditionals q = make_conditionals(table, params, rng);
    std::vector<double> weights(table.classes.size(),
                                1.0 / static_cast<double>(table.size()));
    long long checks = 0, violations = 0;
    double misrank_rate_fit = 0.0;
    for (int n : {4, 32, 256}) {
      TabularPolicy fit = per_class_fit(table, q, n, params.rho, rng);
      MarginAuditResult audit = margin_audit(fit.view(), q, table, weights,
                                             params.margin_k, params.beta, params.C0);
      checks += audit.points * 4;
      violations += audit.violations();
      misrank_rate_fit = audit.misrank_rate;
    }
    TabularPolicy rnd = random_floored_policy(table, params.rho, rng);
    MarginAuditResult audit = margin_audit(rnd.view(), q, table, weights, params.margin_k,
                                           params.beta, params.C0);
    checks += audit.points * 4;
    violations += audit.violations();
    csv.row(std::string("margin_audit"), checks, violations, 0.0);
    summary["margin_audit"] = {{"checks", checks},
                               {"violations", violations},
                               {"fit_misrank_rate", misrank_rate_fit},
                               {"best_u", audit.best_u}};
    total_violations += violations;
  }

  // Randomized (q, pi) pair chain.
  {
    MarginPairStats st = batch_margin_pairs(pair_points, 5, 0.02, 2,
                                            derive_seed(seed, 2), exec);
    csv.row(std::string("margin_pairs"), st.pairs * 4, st.violations, 0.0);
    summary["margin_pairs"] = {{"checks", st.pairs * 4},
                               {"violations", st.violations},
                               {"misrankings", st.misrankings}};
    total_violations += st.violations;
  }

  // Bellman: consistency, monotonicity, trivialization.
  {
    long long checks = 0, violations = 0;
    double max_res = 0.0;
    for (int i = 0; i < instances; ++i) {
      Rng rng = Rng::stream(seed, 100 + static_cast<std::uint64_t>(i));
      RandomMdpParams rp;
      rp.num_layers = 3 + i % 3;
      RandomMdp inst = random_mdp(rp, rng);
      const int T = rp.num_layers + 2;
      auto table = reach_value_table(inst.kernel, inst.q(), T);
      PolicyFn q = inst.q();
      for (std::size_t node = 0; node < inst.kernel.nodes.size(); ++node) {
        for (int t = 1; t <= T; ++t) {
          const Kernel::Node& n = inst.kernel.nodes[node];
          std::span<const double> pr = q(n.cls);
          double expect = 0.0;
          for (std::size_t a = 0; a < n.next.size(); ++a) {
            std::int32_t nx = n.next[a];
            double v = nx == kSuccessNode ? 1.0
                       : nx == kFailureNode
                           ? 0.0
                           : table[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(nx)];
            expect += pr[a] * v;
          }
          double res = std::abs(table[static_cast<std::size_t>(t)][node] - expect);
          max_res = std::max(max_res, res);
          checks++;
          if (res > 1e-12) violations++;
          checks++;
          if (table[static_cast<std::size_t>(t)][node] <
              table[static_cast<std::size_t>(t - 1)][node] - 1e-15) {
            violations++;
          }
        }
      }
      OptimalPolicy opt(inst.kernel);
      int K = min_proof_length(inst.kernel, inst.kernel.start, 64);
      for (int T2 : {1, 3, 6, 10}) {
        double v = reach_value_exact(inst.kernel, opt.view(inst.kernel), T2,
                                     inst.kernel.start);
        double want = (K != kInfiniteLength && K <= T2) ? 1.0 : 0.0;
        checks++;
        if (v != want) violations++;
      }
    }
    csv.row(std::string("bellman"), checks, violations, max_res);
    summary["bellman"] = {{"checks", checks}, {"violations", violations},
                          {"max_residual", max_res}};
    total_violations += violations;
  }

  // Risk identity on sampled datasets.
  {
    long long checks = 0, violations = 0;
    double max_res = 0.0;
    for (int i = 0; i < 10; ++i) {
      Env env = make_env(params, derive_seed(seed, 200 + static_cast<std::uint64_t>(i)));
      Rng rng = Rng::stream(seed, 300 + static_cast<std::uint64_t>(i));
      Mode mode = i % 2 == 0 ? Mode::Hier : Mode::Flat;
      Dataset data = sample_dataset(env, mode, 50, rng);
      GeneratorConditionals qhat = empirical_conditionals(data, env.classes(mode));
      auto weights = empirical_class_weights(data, env.classes(mode).size());
      for (int rep = 0; rep < 5; ++rep) {
        TabularPolicy pi = random_floored_policy(env.classes(mode), params.rho, rng);
        double lhs = empirical_risk(data, pi.view());
        double rhs = expected_risk(qhat.policy(), qhat, weights) +
                     mixture_kl(pi.view(), qhat, weights);
        double res = std::abs(lhs - rhs);
        max_res = std::max(max_res, res);
        checks++;
        if (res > 1e-10) violations++;
      }
    }
    csv.row(std::string("risk_identity"), checks, violations, max_res);
    summary["risk_identity"] = {{"checks", checks}, {"violations", violations},
                                {"max_residual", max_res}};
    total_violations += violations;
  }

  // ELBO-gap identity, EM monotonicity, inference-error bound.
  {
    GenParams lp = params;
    lp.D = 2;
    lp.b_eff = 2;
    lp.r = std::min(params.r, 2);
    lp.M = 3;
    lp.K0 = 6.0;
    lp.alpha = 0.5;
    lp.term_profile = {0.0, 0.4, 1.0};
    lp.homogeneous_classes = true;
    Rng model_rng = Rng::stream(seed, 400);
    LatentModel model = make_latent_model(lp, 64, model_rng);
    const double B = std::log(1.0 / model.rho);
    long long checks = 0, violations = 0;
    double max_res = 0.0;
    Rng rng = Rng::stream(seed, 401);
    std::vector<LatentObservation> data;
    for (int i = 0; i < latent_instances; ++i) {
      data.push_back(observe_masked(sample_dag(lp, rng), model, rng));
    }
    for (const LatentObservation& y : data) {
      auto support = latent_support(y, model);
      PosteriorFamily exact = exact_posterior(y, support, model);
      double ev = log_evidence(y, support, model);
      double res = std::abs(ev - elbo(model, exact, y));
      max_res = std::max(max_res, res);
      checks++;
      if (res > 1e-10) violations++;
      for (int rep = 0; rep < std::max(1, latent_pairs / latent_instances); ++rep) {
        PosteriorFamily phi;
        phi.support = support;
        phi.weights.resize(support.size());
        double total = 0.0;
        for (double& w : phi.weights) {
          w = 0.02 + rng.uniform01();
          total += w;
        }
        for (double& w : phi.weights) w /= total;
        double gap = ev - elbo(model, phi, y);
        double kl = 0.0;
        for (std::size_t s = 0; s < phi.weights.size(); ++s) {
          kl += phi.weights[s] * (std::log(phi.weights[s]) - std::log(exact.weights[s]));
        }
        double res2 = std::abs(gap - kl);
        max_res = std::max(max_res, res2);
        checks += 2;
        if (res2 > 1e-10) violations++;
        if (gap < -1e-10) violations++;
        double pkl = postkl({phi}, {exact});
        TabularPolicy pi = random_floored_policy(*model.classes, model.rho, rng);
        for (DecisionType typ : {DecisionType::Dec, DecisionType::Sol}) {
          double r_star = posterior_weighted_risk({y}, {exact}, model, pi.view(), typ);
          double r_phi = posterior_weighted_risk({y}, {phi}, model, pi.view(), typ);
          checks++;
          if (std::abs(r_star - r_phi) > B * std::sqrt(2.0 * pkl) + 1e-9) violations++;
        }
      }
    }
    // EM monotonicity with the exact E-step.
    LatentModel init = model;
    init.alpha = std::min(0.9, model.alpha + 0.3);
    init.K0 = std::max(1.5, model.K0 / 3.0);
    for (auto& row : init.label_probs) {
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(row.size()));
    }
    EmState st = em_init(data, init);
    double prev = st.empirical_elbo;
    for (int cycle = 0; cycle < em_cycles; ++cycle) {
      em_step(st);
      checks++;
      if (st.empirical_elbo < prev - 1e-9) violations++;
      prev = st.empirical_elbo;
    }
    csv.row(std::string("elbo_gap"), checks, violations, max_res);
    summary["elbo_gap"] = {{"checks", checks}, {"violations", violations},
                           {"max_residual", max_res}};
    total_violations += violations;
  }

  ExperimentResult result;
  result.exit_code = total_violations > 0 ? 2 : 0;
  result.csv_files.emplace_back("verify.csv", csv.str());
  summary["total_violations"] = total_violations;
  result.json_summary = make_summary(cfg, "verify-bounds", std::move(summary));
  return result;
}

// ---- sampler-exactness -------------------------------------------------------------

ExperimentResult run_sampler_exactness(const Config& cfg) {
  cfg.require_known(with_common({"sampler.instances", "sampler.horizon",
                                 "sampler.particles", "sampler.smc_reps"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  const int instances = static_cast<int>(cfg.get_int("sampler.instances", 20));
  const int L = static_cast<int>(cfg.get_int("sampler.horizon", 5));
  const int particles = static_cast<int>(cfg.get_int("sampler.particles", 256));
  const int smc_reps = static_cast<int>(cfg.get_int("sampler.smc_reps", 50));

  CsvBuilder csv(
      "instance,doob_tv,telescope_err,smc_max_logw_var,smc_success_rate,"
      "accept_frac,accept_pred");
  double worst_tv = 0.0, worst_var = 0.0, worst_tel = 0.0;
  double min_success = 1.0;
  int done = 0;
  for (int i = 0; done < instances; ++i) {
    Rng rng = Rng::stream(seed, 500 + static_cast<std::uint64_t>(i));
    RandomMdpParams rp;
    rp.num_layers = std::min(L - 1, 4);
    rp.width = 3;
    rp.num_candidates = 3;
    RandomMdp inst = random_mdp(rp, rng);
    SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
    if (h.at(L, inst.kernel.start) <= 0.0) continue;
    done++;
    DoobPolicy qstar(inst.kernel, inst.q(), h);
    PathLaw cond = enumerate_paths(inst.kernel, inst.q(), L, inst.kernel.start, true, 10000);
    PathLaw doob = doob_path_law(inst.kernel, qstar, L, inst.kernel.start, 10000);
    double tv = total_variation(cond, doob);

    Rng sampler = Rng::stream(seed, 600 + static_cast<std::uint64_t>(i));
    double tel_err = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      Trace t = doob_rollout(inst.kernel, qstar, inst.kernel.start, sampler);
      double star = 0.0, base = 0.0;
      for (const TraceStep& s : t.steps) {
        star += std::log(qstar.probs(L - s.t, s.node)[static_cast<std::size_t>(s.choice)]);
        base += std::log(inst.q()(s.cls)[static_cast<std::size_t>(s.choice)]);
      }
      tel_err = std::max(tel_err,
                         std::abs(star - (base - std::log(h.at(L, inst.kernel.start)))));
    }

    SmcOptions opt;
    opt.num_particles = particles;
    Rng smc_rng = Rng::stream(seed, 700 + static_cast<std::uint64_t>(i));
    double max_var = 0.0;
    int wins = 0;
    for (int rep = 0; rep < smc_reps; ++rep) {
      SmcResult res = twisted_smc(inst.kernel, inst.q(), exact_twist(h), L, opt,
                                  inst.kernel.start, smc_rng);
      for (double v : res.logw_variance) max_var = std::max(max_var, v);
      wins += res.found && res.trace.successful() ? 1 : 0;
    }
    double success_rate = static_cast<double>(wins) / smc_reps;

    SmcOptions boot;
    boot.num_particles = 4000;
    boot.ess_frac = 0.0;
    Rng boot_rng = Rng::stream(seed, 800 + static_cast<std::uint64_t>(i));
    SmcResult bres = twisted_smc(inst.kernel, inst.q(), constant_twist(), L, boot,
                                 inst.kernel.start, boot_rng);
    csv.row(done - 1, tv, tel_err, max_var, success_rate, bres.final_alive_fraction,
            h.at(L, inst.kernel.start));
    worst_tv = std::max(worst_tv, tv);
    worst_var = std::max(worst_var, max_var);
    worst_tel = std::max(worst_tel, tel_err);
    min_success = std::min(min_success, success_rate);
  }

  ExperimentResult result;
  bool ok = worst_tv <= 1e-10 && worst_var <= 1e-12 && min_success >= 1.0;
  result.exit_code = ok ? 0 : 2;
  result.csv_files.emplace_back("sampler_exactness.csv", csv.str());
  json summary = {{"instances", instances},
                  {"max_doob_tv", worst_tv},
                  {"max_logw_variance", worst_var},
                  {"max_telescope_err", worst_tel},
                  {"min_smc_success_rate", min_success}};
  result.json_summary = make_summary(cfg, "sampler-exactness", std::move(summary));
  return result;
}

// ---- estimate-params -----------------------------------------------------------------

ExperimentResult run_estimate_params(const Config& cfg) {
  cfg.require_known(with_common({"est.dags", "est.seeds"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  GenParams params = gen_params_from_config(cfg);
  const int dags = static_cast<int>(cfg.get_int("est.dags", 1000));
  const int seeds = static_cast<int>(cfg.get_int("est.seeds", 20));

  CsvBuilder csv("source,depth,C,T,S,Lbar,b_ratio,alpha_ratio,product_ratio");
  json summary;

  auto emit_depths = [&](const std::string& source, const MomentEstimates& est) {
    for (const DepthDiagnostic& d : est.per_depth) {
      csv.row(source, d.depth, d.C, d.T, d.S, d.Lbar, d.b_ratio, d.alpha_ratio,
              d.product_ratio);
    }
  };

  // Noiseless statistics from the homogeneous moment model.
  {
    SuffStats s;
    int depths = params.D + 1;
    s.C.resize(static_cast<std::size_t>(depths));
    s.T.resize(static_cast<std::size_t>(depths));
    s.S.resize(static_cast<std::size_t>(depths));
    s.Lbar.resize(static_cast<std::size_t>(depths));
    for (int d = 0; d < depths; ++d) {
      auto ud = static_cast<std::size_t>(d);
      double C = std::pow(params.b_eff, d);
      double Lbar = params.K0 * std::pow(params.alpha, d);
      s.C[ud] = static_cast<long long>(std::llround(C));
      s.T[ud] = s.C[ud];
      s.Lbar[ud] = Lbar;
      s.S[ud] = static_cast<long long>(std::llround(C * Lbar));
    }
    MomentEstimates est = estimate_structure({s});
    emit_depths("noiseless", est);
    summary["noiseless"] = {{"b_eff_hat", est.b_eff_hat},
                            {"alpha_hat", est.alpha_hat},
                            {"b_exact", std::abs(est.b_eff_hat - params.b_eff) < 1e-9},
                            {"alpha_exact", std::abs(est.alpha_hat - params.alpha) < 1e-9}};
  }

  // Sampled DAGs, default profile: b_eff from unique-node counts.
  std::vector<double> b_hats;
  for (int sd = 0; sd < seeds; ++sd) {
    Rng rng = Rng::stream(seed, 900 + static_cast<std::uint64_t>(sd));
    std::vector<SuffStats> stats;
    stats.reserve(static_cast<std::size_t>(dags));
    for (int i = 0; i < dags; ++i) stats.push_back(suff_stats(sample_dag(params, rng)));
    MomentEstimates est = estimate_structure(stats);
    b_hats.push_back(est.b_eff_hat);
    if (sd == 0) emit_depths("sampled_default", est);
  }
  std::sort(b_hats.begin(), b_hats.end());
  double b_median = b_hats[b_hats.size() / 2];

  // Sampled DAGs, mixed profile: alpha from per-terminal mean lengths.
  GenParams mixed = params;
  mixed.term_profile.assign(static_cast<std::size_t>(params.D) + 1, 0.0);
  for (int d = 1; d < params.D; ++d) mixed.term_profile[static_cast<std::size_t>(d)] = 0.5;
  mixed.term_profile.back() = 1.0;
  std::vector<double> a_hats;
  for (int sd = 0; sd < seeds; ++sd) {
    Rng rng = Rng::stream(seed, 1000 + static_cast<std::uint64_t>(sd));
    std::vector<SuffStats> stats;
    stats.reserve(static_cast<std::size_t>(dags));
    for (int i = 0; i < dags; ++i) stats.push_back(suff_stats(sample_dag(mixed, rng)));
    MomentEstimates est = estimate_structure(stats);
    a_hats.push_back(est.alpha_hat);
    if (sd == 0) emit_depths("sampled_mixed", est);
  }
  std::sort(a_hats.begin(), a_hats.end());
  double a_median = a_hats[a_hats.size() / 2];

  // Aggregated-only: just S_d; only the product is identifiable.
  std::vector<double> p_hats;
  MomentEstimates agg;
  for (int sd = 0; sd < seeds; ++sd) {
    std::vector<std::vector<double>> s_only;
    Rng rng = Rng::stream(seed, 1100 + static_cast<std::uint64_t>(sd));
    for (int i = 0; i < dags; ++i) {
      SuffStats s = suff_stats(sample_dag(mixed, rng));
      std::vector<double> row(s.S.size());
      for (std::size_t d = 0; d < s.S.size(); ++d) row[d] = static_cast<double>(s.S[d]);
      s_only.push_back(std::move(row));
    }
    MomentEstimates est = estimate_structure_aggregated(s_only);
    p_hats.push_back(est.product_hat);
    if (sd == 0) {
      agg = est;
      emit_depths("aggregated_only", est);
    }
  }
  std::sort(p_hats.begin(), p_hats.end());
  double p_median = p_hats[p_hats.size() / 2];

  double product_truth = params.b_eff * params.alpha;
  bool b_ok = std::abs(b_median - params.b_eff) <= 0.1 * params.b_eff;
  bool a_ok = std::abs(a_median - params.alpha) <= 0.1 * params.alpha;
  bool prod_ok = std::abs(p_median - product_truth) <= 0.1 * product_truth;

  summary["sampled"] = {{"b_eff_median", b_median},
                        {"alpha_median", a_median},
                        {"b_within_10pct", b_ok},
                        {"alpha_within_10pct", a_ok}};
  summary["aggregated_only"] = {{"product_median", p_median},
                                {"individual_recoverable", agg.individual_recoverable},
                                {"product_within_10pct", prod_ok}};

  ExperimentResult result;
  result.exit_code = (b_ok && a_ok && prod_ok && !agg.individual_recoverable) ? 0 : 2;
  result.csv_files.emplace_back("estimates.csv", csv.str());
  result.json_summary = make_summary(cfg, "estimate-params", std::move(summary));
  return result;
}

// ---- generalization-probe ---------------------------------------------------------------

ExperimentResult run_generalization_probe(const Config& cfg) {
  cfg.require_known(with_common({"probe.n_grid", "probe.seeds", "probe.mode"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  GenParams params = gen_params_from_config(cfg);
  std::vector<long long> n_grid =
      cfg.get_int_list("probe.n_grid", {25, 50, 100, 200, 400, 800, 1600, 3200, 6400});
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw ParseError("probe.n_grid must be strictly increasing");
  }
  const int seeds = static_cast<int>(cfg.get_int("probe.seeds", 20));
  Mode mode = cfg.get_string("probe.mode", "hier") == std::string("flat") ? Mode::Flat
                                                                          : Mode::Hier;

  CsvBuilder csv("variant,n,seed,mixture_kl");
  std::map<long long, std::vector<double>> fine_by_n, coarse_by_n;
  std::vector<double> analytic_plateaus;
  for (int sd = 0; sd < seeds; ++sd) {
    Env env = make_env(params, derive_seed(seed, 1200 + static_cast<std::uint64_t>(sd)));
    const ClassTable& classes = env.classes(mode);
    auto grouping = coarse_group_by_depth(classes);
    auto weights = exact_class_weights(classes);
    Rng rng = Rng::stream(seed, 1300 + static_cast<std::uint64_t>(sd));
    Dataset data;
    int next_trace = 0;
    for (long long n : n_grid) {
      while (data.num_traces < n) {
        data.append(sample_labeled_trace(env, mode, rng), next_trace++);
      }
      FitOptions fine;
      fine.rho = params.rho;
      TabularPolicy fit = erm_fit(classes, data, fine);
      double kl = mixture_kl(fit.view(), env.q(mode), weights);
      csv.row(std::string("well_specified"), n, sd, kl);
      fine_by_n[n].push_back(kl);

      FitOptions coarse = fine;
      coarse.class_group = &grouping;
      TabularPolicy cfit = erm_fit(classes, data, coarse);
      double ckl = mixture_kl(cfit.view(), env.q(mode), weights);
      csv.row(std::string("coarsened"), n, sd, ckl);
      coarse_by_n[n].push_back(ckl);
    }
    // Analytic plateau: the nu-weighted M-projection of q onto the coarse class.
    {
      int groups = 0;
      for (int g : grouping) groups = std::max(groups, g + 1);
      std::vector<std::vector<double>> proj(static_cast<std::size_t>(groups));
      std::vector<double> gw(static_cast<std::size_t>(groups), 0.0);
      for (int c = 0; c < classes.size(); ++c) {
        auto uc = static_cast<std::size_t>(c);
        auto g = static_cast<std::size_t>(grouping[uc]);
        if (proj[g].empty()) proj[g].assign(env.q(mode).probs[uc].size(), 0.0);
        for (std::size_t a = 0; a < env.q(mode).probs[uc].size(); ++a) {
          proj[g][a] += weights[uc] * env.q(mode).probs[uc][a];
        }
        gw[g] += weights[uc];
      }
      for (std::size_t g = 0; g < proj.size(); ++g) {
        for (double& v : proj[g]) v /= gw[g];
      }
      double plateau = 0.0;
      for (int c = 0; c < classes.size(); ++c) {
        auto uc = static_cast<std::size_t>(c);
        auto g = static_cast<std::size_t>(grouping[uc]);
        double kl = 0.0;
        for (std::size_t a = 0; a < proj[g].size(); ++a) {
          double qa = env.q(mode).probs[uc][a];
          if (qa > 0.0) kl += qa * (std::log(qa) - std::log(proj[g][a]));
        }
        plateau += weights[uc] * kl;
      }
      analytic_plateaus.push_back(plateau);
    }
  }

  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  std::vector<double> log_n, log_kl;
  json medians = json::array();
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (long long n : n_grid) {
    double med = median_of(fine_by_n[n]);
    double cmed = median_of(coarse_by_n[n]);
    medians.push_back({{"n", n}, {"well_specified", med}, {"coarsened", cmed}});
    if (med > prev) monotone = false;
    prev = med;
    log_n.push_back(std::log(static_cast<double>(n)));
    log_kl.push_back(std::log(std::max(med, 1e-300)));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    sx += log_n[i];
    sy += log_kl[i];
    sxx += log_n[i] * log_n[i];
    sxy += log_n[i] * log_kl[i];
  }
  double npts = static_cast<double>(log_n.size());
  double slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);
  double coarse_tail = median_of(coarse_by_n[n_grid.back()]);
  double analytic_plateau = median_of(analytic_plateaus);

  json summary = {{"medians", medians},
                  {"log_log_slope", slope},
                  {"median_monotone_decreasing", monotone},
                  {"coarse_plateau", coarse_tail},
                  {"analytic_plateau", analytic_plateau}};
  ExperimentResult result;
  result.exit_code = monotone ? 0 : 2;
  result.csv_files.emplace_back("probe.csv", csv.str());
  result.json_summary = make_summary(cfg, "generalization-probe", std::move(summary));
  return result;
}

// ---- separation ------------------------------------------------------------------------

namespace {

// Success of mode-specific search after training on the first n labeled
// traces, for every n in the grid (counts accumulate incrementally).
void separation_instance(const Env& env, Mode mode, const std::vector<long long>& grid,
                         int k, std::uint64_t trace_seed, std::vector<long long>& wins_out) {
  const ClassTable& classes = env.classes(mode);
  std::vector<std::vector<double>> counts(static_cast<std::size_t>(classes.size()));
  for (int c = 0; c < classes.size(); ++c) {
    counts[static_cast<std::size_t>(c)].assign(
        static_cast<std::size_t>(classes.at(c).num_candidates), 0.0);
  }
  const Kernel& perm = env.kernel(mode, Validity::Permissive);
  PolicyFn q = env.q(mode).policy();
  long long produced = 0;
  TopKConfig cfg;
  cfg.k_dec = cfg.k_sol = cfg.k_flat = k;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    while (produced < grid[gi]) {
      Rng rng = Rng::stream(trace_seed, static_cast<std::uint64_t>(produced));
      Trace t = rollout(perm, q, perm.num_nodes() + 1, perm.start, rng);
      for (const TraceStep& s : t.steps) {
        counts[static_cast<std::size_t>(s.cls)][static_cast<std::size_t>(s.choice)] += 1.0;
      }
      produced++;
    }
    TabularPolicy fit;
    fit.rho = env.params.rho;
    fit.rows.resize(static_cast<std::size_t>(classes.size()));
    for (int c = 0; c < classes.size(); ++c) {
      auto uc = static_cast<std::size_t>(c);
      fit.rows[uc] = floor_projected_mle({counts[uc].data(), counts[uc].size()},
                                         static_cast<int>(counts[uc].size()),
                                         env.params.rho);
    }
    SearchResult res = backtracking_search(env, mode, fit.view(), cfg, true);
    wins_out[gi] += res.success ? 1 : 0;
  }
}

double ls_slope(const std::vector<std::pair<double, double>>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = static_cast<double>(pts.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ExperimentResult run_separation(const Config& cfg) {
  cfg.require_known(with_common({"sep.depths", "sep.n_grid", "sep.delta", "sep.instances",
                                 "sep.k"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  ExecMode exec = exec_mode_from_config(cfg);
  // The separation needs reuse: without an explicit override the generator
  // runs at the designed r = 2 (cut elimination is a no-op at r = 1).
  Config sep_cfg = cfg;
  if (!cfg.has("gen.r")) sep_cfg.set("gen.r", "2");
  GenParams base = gen_params_from_config(sep_cfg);
  std::vector<long long> depths = cfg.get_int_list("sep.depths", {1, 2, 3});
  std::vector<long long> grid =
      cfg.get_int_list("sep.n_grid", {16, 23, 32, 45, 64, 91, 128, 181, 256, 362, 512,
                                      724, 1024, 1448, 2048, 2896, 4096});
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw ParseError("sep.n_grid must be strictly increasing");
  }
  const double delta = cfg.get_double("sep.delta", 0.2);
  const int instances = static_cast<int>(cfg.get_int("sep.instances", 200));
  const int k = static_cast<int>(cfg.get_int("sep.k", 1));

  CsvBuilder csv("D,mode,n,successes,trials,rate,wilson_lo,wilson_hi");
  CsvBuilder ratio_csv("D,n_flat,n_hier,count_ratio,nstar_flat,nstar_hier,nstar_ratio");
  json per_depth = json::array();
  std::vector<std::pair<double, double>> flat_pts, hier_pts;
  std::vector<double> nstar_ratios;
  bool all_found = true;

  for (long long D : depths) {
    GenParams params = base;
    params.D = static_cast<int>(D);
    std::vector<std::vector<long long>> wins_flat(static_cast<std::size_t>(instances)),
        wins_hier(static_cast<std::size_t>(instances));
    std::vector<double> count_flat(static_cast<std::size_t>(instances), 0.0);
    std::vector<double> count_hier(static_cast<std::size_t>(instances), 0.0);
    parallel_for(exec, instances, [&](long long i) {
      auto ui = static_cast<std::size_t>(i);
      std::uint64_t env_seed =
          derive_seed(seed, 0x5E90000ULL + static_cast<std::uint64_t>(D) * 4096 +
                                static_cast<std::uint64_t>(i));
      Env env = make_env(params, env_seed);
      count_flat[ui] = static_cast<double>(env.counts.n_flat);
      count_hier[ui] = static_cast<double>(env.counts.n_hier);
      wins_flat[ui].assign(grid.size(), 0);
      wins_hier[ui].assign(grid.size(), 0);
      separation_instance(env, Mode::Flat, grid, k, derive_seed(env_seed, 1), wins_flat[ui]);
      separation_instance(env, Mode::Hier, grid, k, derive_seed(env_seed, 2), wins_hier[ui]);
    });
    // Order-independent aggregation.
    std::vector<long long> flat_total(grid.size(), 0), hier_total(grid.size(), 0);
    double kflat = 0.0, khier = 0.0;
    for (int i = 0; i < instances; ++i) {
      auto ui = static_cast<std::size_t>(i);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        flat_total[g] += wins_flat[ui][g];
        hier_total[g] += wins_hier[ui][g];
      }
      kflat += count_flat[ui];
      khier += count_hier[ui];
    }
    kflat /= instances;
    khier /= instances;

    auto minimal_n = [&](const std::vector<long long>& totals) -> long long {
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double rate = static_cast<double>(totals[g]) / instances;
        if (rate >= 1.0 - delta) return grid[g];
      }
      return -1;
    };
    // Continuous crossing estimate, immune to the grid quantum: least squares
    // of rate against log n over the band around the target, falling back to
    // two-point interpolation when the band is too thin.
    auto crossing_n = [&](const std::vector<long long>& totals) -> double {
      double target = 1.0 - delta;
      std::vector<std::pair<double, double>> band;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double rate = static_cast<double>(totals[g]) / instances;
        if (rate >= target - 0.35 && rate <= target + 0.17) {
          band.emplace_back(std::log(static_cast<double>(grid[g])), rate);
        }
      }
      if (band.size() >= 3) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (auto [x, y] : band) {
          sx += x;
          sy += y;
          sxx += x * x;
          sxy += x * y;
        }
        double m = static_cast<double>(band.size());
        double den = m * sxx - sx * sx;
        if (den > 1e-12) {
          double b = (m * sxy - sx * sy) / den;
          double a = (sy - b * sx) / m;
          if (b > 1e-6) {
            double x = (target - a) / b;
            double lo = std::log(static_cast<double>(grid.front())) - 1.0;
            double hi = std::log(static_cast<double>(grid.back())) + 1.0;
            if (x >= lo && x <= hi) return std::exp(x);
          }
        }
      }
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double rate = static_cast<double>(totals[g]) / instances;
        if (rate >= target) {
          if (g == 0) return static_cast<double>(grid[0]);
          double r0 = static_cast<double>(totals[g - 1]) / instances;
          double x0 = std::log(static_cast<double>(grid[g - 1]));
          double x1 = std::log(static_cast<double>(grid[g]));
          double t = (target - r0) / (rate - r0);
          return std::exp(x0 + t * (x1 - x0));
        }
      }
      return -1.0;
    };
    long long nstar_flat = minimal_n(flat_total);
    long long nstar_hier = minimal_n(hier_total);
    double cross_flat = crossing_n(flat_total);
    double cross_hier = crossing_n(hier_total);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (Mode mode : {Mode::Flat, Mode::Hier}) {
        long long wins = mode == Mode::Flat ? flat_total[g] : hier_total[g];
        WilsonInterval wi = wilson_interval(wins, instances);
        csv.row(D, std::string(mode_name(mode)), grid[g], wins,
                static_cast<long long>(instances),
                static_cast<double>(wins) / instances, wi.lo, wi.hi);
      }
    }
    double nstar_ratio = (cross_flat > 0 && cross_hier > 0)
                             ? cross_flat / cross_hier
                             : std::numeric_limits<double>::quiet_NaN();
    ratio_csv.row(D, kflat, khier, kflat / khier, nstar_flat, nstar_hier, nstar_ratio);

    double flat_hi_at_hier = 1.0;
    if (nstar_hier > 0) {
      for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g] == nstar_hier) {
          flat_hi_at_hier = wilson_interval(flat_total[g], instances).hi;
        }
      }
    }
    per_depth.push_back({{"D", D},
                         {"count_ratio", kflat / khier},
                         {"nstar_flat", nstar_flat},
                         {"nstar_hier", nstar_hier},
                         {"crossing_flat", cross_flat},
                         {"crossing_hier", cross_hier},
                         {"nstar_ratio", nstar_ratio},
                         {"flat_wilson_hi_at_nstar_hier", flat_hi_at_hier},
                         {"wilson_separated", flat_hi_at_hier < 1.0 - delta}});
    if (cross_flat < 0 || cross_hier < 0) all_found = false;
    if (cross_flat > 0) {
      flat_pts.emplace_back(static_cast<double>(D), std::log(cross_flat));
    }
    if (cross_hier > 0) {
      hier_pts.emplace_back(static_cast<double>(D), std::log(cross_hier));
    }
    if (cross_flat > 0 && cross_hier > 0) {
      nstar_ratios.push_back(cross_flat / cross_hier);
    }
  }

  bool strictly_increasing = all_found && nstar_ratios.size() == depths.size();
  for (std::size_t i = 1; i < nstar_ratios.size(); ++i) {
    if (nstar_ratios[i] <= nstar_ratios[i - 1]) strictly_increasing = false;
  }
  double slope_flat = flat_pts.size() >= 2 ? ls_slope(flat_pts)
                                           : std::numeric_limits<double>::quiet_NaN();
  double slope_hier = hier_pts.size() >= 2 ? ls_slope(hier_pts)
                                           : std::numeric_limits<double>::quiet_NaN();
  bool slope_gap = slope_flat > slope_hier;
  bool wilson_sep = true;
  for (const auto& row : per_depth) {
    if (!row.at("wilson_separated").get<bool>()) wilson_sep = false;
  }

  json summary = {{"per_depth", per_depth},
                  {"ratio_strictly_increasing", strictly_increasing},
                  {"log_nstar_slope_flat", slope_flat},
                  {"log_nstar_slope_hier", slope_hier},
                  {"slope_difference_positive", slope_gap},
                  {"wilson_separated_at_each_depth", wilson_sep},
                  {"delta", delta},
                  {"instances", instances}};
  ExperimentResult result;
  result.exit_code = (strictly_increasing && slope_gap) ? 0 : 2;
  result.csv_files.emplace_back("separation.csv", csv.str());
  result.csv_files.emplace_back("separation_summary.csv", ratio_csv.str());
  result.json_summary = make_summary(cfg, "separation", std::move(summary));
  return result;
}

// ---- gen / sample / train / search ------------------------------------------------------

ExperimentResult run_gen(const Config& cfg) {
  cfg.require_known(kCommonKeys);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  GenParams params = gen_params_from_config(cfg);
  const int trials = static_cast<int>(cfg.get_int("trials", 10));
  ExperimentResult result;
  CsvBuilder csv("dag,depth,C,T,S,Lbar");
  std::vector<SuffStats> stats;
  for (int i = 0; i < trials; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    ProofDag z = sample_dag(params, rng);
    result.csv_files.emplace_back("dag_" + std::to_string(i) + ".txt", write_dag(z));
    SuffStats s = suff_stats(z);
    for (int d = 0; d < s.depths(); ++d) {
      auto ud = static_cast<std::size_t>(d);
      csv.row(i, d, s.C[ud], s.T[ud], s.S[ud], s.Lbar[ud]);
    }
    stats.push_back(std::move(s));
  }
  MomentEstimates est = estimate_structure(stats);
  result.csv_files.emplace_back("stats.csv", csv.str());
  json summary = {{"dags", trials},
                  {"b_eff_hat", est.b_eff_hat},
                  {"alpha_hat", est.alpha_hat},
                  {"product_hat", est.product_hat}};
  result.json_summary = make_summary(cfg, "gen", std::move(summary));
  return result;
}

ExperimentResult run_sample(const Config& cfg) {
  cfg.require_known(with_common({"sample.law", "sample.mode", "sample.particles"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  GenParams params = gen_params_from_config(cfg);
  const int trials = static_cast<int>(cfg.get_int("trials", 10));
  std::string law = cfg.get_string("sample.law", "qlabel");
  Mode mode = cfg.get_string("sample.mode", "hier") == std::string("flat") ? Mode::Flat
                                                                           : Mode::Hier;
  Env env = make_env(params, seed);
  ExperimentResult result;
  int successes = 0;
  if (law == "doob" || law == "smc") {
    const Kernel& strict = env.kernel(mode, Validity::Strict);
    const int L = strict.num_nodes();
    PolicyFn q = env.q(mode).policy();
    SuccessToGo h = success_to_go(strict, q, L);
    if (h.at(L, strict.start) <= 0.0) {
      throw ConditioningError("sample: no successful trace within the horizon");
    }
    if (law == "doob") {
      DoobPolicy qstar(strict, q, h);
      for (int i = 0; i < trials; ++i) {
        Rng rng = Rng::stream(seed, 2000 + static_cast<std::uint64_t>(i));
        Trace t = doob_rollout(strict, qstar, strict.start, rng);
        successes += t.successful() ? 1 : 0;
        result.csv_files.emplace_back("trace_" + std::to_string(i) + ".txt",
                                      write_trace(t, env.classes(mode)));
      }
    } else {
      SmcOptions opt;
      opt.num_particles = static_cast<int>(cfg.get_int("sample.particles", 128));
      for (int i = 0; i < trials; ++i) {
        Rng rng = Rng::stream(seed, 3000 + static_cast<std::uint64_t>(i));
        SmcResult res = twisted_smc(strict, q, exact_twist(h), L, opt, strict.start, rng);
        if (!res.found) continue;
        successes += res.trace.successful() ? 1 : 0;
        result.csv_files.emplace_back("trace_" + std::to_string(i) + ".txt",
                                      write_trace(res.trace, env.classes(mode)));
      }
    }
  } else if (law == "qlabel" || law == "reference") {
    for (int i = 0; i < trials; ++i) {
      Rng rng = Rng::stream(seed, 4000 + static_cast<std::uint64_t>(i));
      Trace t = law == std::string("qlabel") ? sample_labeled_trace(env, mode, rng)
                                             : reference_trace(env, mode);
      successes += t.successful() ? 1 : 0;
      result.csv_files.emplace_back("trace_" + std::to_string(i) + ".txt",
                                    write_trace(t, env.classes(mode)));
    }
  } else {
    throw ParseError("sample.law must be one of reference, qlabel, doob, smc");
  }
  json summary = {{"law", law},
                  {"mode", mode_name(mode)},
                  {"traces", trials},
                  {"successful", successes}};
  result.json_summary = make_summary(cfg, "sample", std::move(summary));
  return result;
}

ExperimentResult run_train(const Config& cfg) {
  cfg.require_known(with_common({"train.n", "train.mode", "train.coarse"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  GenParams params = gen_params_from_config(cfg);
  const int n = static_cast<int>(cfg.get_int("train.n", 1000));
  Mode mode = cfg.get_string("train.mode", "hier") == std::string("flat") ? Mode::Flat
                                                                          : Mode::Hier;
  bool coarse = cfg.get_bool("train.coarse", false);
  Env env = make_env(params, seed);
  Rng rng = Rng::stream(seed, 5000);
  Dataset data = sample_dataset(env, mode, n, rng);
  FitOptions opt;
  opt.rho = params.rho;
  auto grouping = coarse_group_by_depth(env.classes(mode));
  if (coarse) opt.class_group = &grouping;
  TabularPolicy fit = erm_fit(env.classes(mode), data, opt);
  auto weights = exact_class_weights(env.classes(mode));
  double kl = mixture_kl(fit.view(), env.q(mode), weights);
  double risk = empirical_risk(data, fit.view());
  ExperimentResult result;
  result.csv_files.emplace_back("policy.txt", write_policy(fit));
  result.csv_files.emplace_back("dataset.txt", write_dataset(data));
  CsvBuilder csv("mode,n,mixture_kl,empirical_risk");
  csv.row(std::string(mode_name(mode)), static_cast<long long>(n), kl, risk);
  result.csv_files.emplace_back("train.csv", csv.str());
  json summary = {{"mode", mode_name(mode)}, {"n", n}, {"mixture_kl", kl}};
  result.json_summary = make_summary(cfg, "train", std::move(summary));
  return result;
}

ExperimentResult run_search_report(const Config& cfg) {
  cfg.require_known(with_common({"search.k_dec", "search.k_sol", "search.k_flat",
                                 "search.budget", "search.train_n", "search.memo"}));
  std::uint64_t seed = cfg.get_u64("seed", 0);
  GenParams params = gen_params_from_config(cfg);
  const int trials = static_cast<int>(cfg.get_int("trials", 100));
  const int train_n = static_cast<int>(cfg.get_int("search.train_n", 50));
  TopKConfig tk;
  tk.k_dec = static_cast<int>(cfg.get_int("search.k_dec", 1));
  tk.k_sol = static_cast<int>(cfg.get_int("search.k_sol", 1));
  tk.k_flat = static_cast<int>(cfg.get_int("search.k_flat", 1));
  tk.budget = cfg.get_int("search.budget", 0);
  bool memo = cfg.get_bool("search.memo", true);

  CsvBuilder csv("instance,mode,success,expansions,coverage");
  long long covered_and_failed = 0;
  for (int i = 0; i < trials; ++i) {
    Env env = make_env(params, derive_seed(seed, 6000 + static_cast<std::uint64_t>(i)));
    for (Mode mode : {Mode::Flat, Mode::Hier}) {
      Rng rng = Rng::stream(seed, 7000 + static_cast<std::uint64_t>(i) * 2 +
                                      (mode == Mode::Flat ? 0 : 1));
      Dataset data = sample_dataset(env, mode, train_n, rng);
      FitOptions fo;
      fo.rho = params.rho;
      TabularPolicy fit = erm_fit(env.classes(mode), data, fo);
      SearchResult res = backtracking_search(env, mode, fit.view(), tk, memo);
      bool cover = coverage_event(reference_trace(env, mode), fit.view(), tk,
                                  env.classes(mode));
      if (cover && !res.success) covered_and_failed++;
      csv.row(i, std::string(mode_name(mode)), res.success ? 1 : 0, res.expansions,
              cover ? 1 : 0);
    }
  }
  ExperimentResult result;
  result.exit_code = covered_and_failed == 0 ? 0 : 2;
  result.csv_files.emplace_back("search.csv", csv.str());
  json summary = {{"instances", trials}, {"covered_but_failed", covered_and_failed}};
  result.json_summary = make_summary(cfg, "search", std::move(summary));
  return result;
}

// ---- dispatch ---------------------------------------------------------------------------

ExperimentResult run_experiment(const Config& cfg) {
  std::string name = cfg.get_string("experiment", "");
  if (name == "verify-bounds") return run_verify_bounds(cfg);
  if (name == "sampler-exactness") return run_sampler_exactness(cfg);
  if (name == "estimate-params") return run_estimate_params(cfg);
  if (name == "generalization-probe") return run_generalization_probe(cfg);
  if (name == "separation") return run_separation(cfg);
  if (name == "gen") return run_gen(cfg);
  if (name == "sample") return run_sample(cfg);
  if (name == "train") return run_train(cfg);
  if (name == "search") return run_search_report(cfg);
  throw ParseError("unknown experiment '" + name + "'");
}

void write_result(const ExperimentResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, body] : result.csv_files) {
    write_file((std::filesystem::path(out_dir) / name).string(), body);
  }
  write_file((std::filesystem::path(out_dir) / "summary.json").string(),
             result.json_summary);
}

}  // namespace prooflab
