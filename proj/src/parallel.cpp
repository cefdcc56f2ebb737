#include "prooflab/parallel.hpp"

#include <algorithm>
#include <cmath>

#include "prooflab/bl_metric.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace prooflab {

bool openmp_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int openmp_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void parallel_for(ExecMode mode, long long n, const std::function<void(long long)>& body) {
#ifdef _OPENMP
  if (mode == ExecMode::OpenMP) {
#pragma omp parallel for schedule(dynamic, 16)
    for (long long i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
#else
  (void)mode;
#endif
  for (long long i = 0; i < n; ++i) {
    body(i);
  }
}

std::vector<std::uint8_t> batch_rollout_success(const Kernel& k, const PolicyFn& pi,
                                                int horizon, std::int32_t start,
                                                long long n, std::uint64_t seed,
                                                ExecMode mode) {
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(n), 0);
  auto body = [&](long long i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    Trace t = rollout(k, pi, horizon, start, rng);
    ok[static_cast<std::size_t>(i)] = t.successful() ? 1 : 0;
  };
  parallel_for(mode, n, body);
  return ok;
}

long long count_rollout_successes(const Kernel& k, const PolicyFn& pi, int horizon,
                                  std::int32_t start, long long n, std::uint64_t seed,
                                  ExecMode mode) {
#ifdef _OPENMP
  if (mode == ExecMode::OpenMP) {
    long long total = 0;
#pragma omp parallel for schedule(static) reduction(+ : total)
    for (long long i = 0; i < n; ++i) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
      Trace t = rollout(k, pi, horizon, start, rng);
      total += t.successful() ? 1 : 0;
    }
    return total;
  }
#endif
  long long total = 0;
  for (long long i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    Trace t = rollout(k, pi, horizon, start, rng);
    total += t.successful() ? 1 : 0;
  }
  return total;
}

std::vector<Trace> batch_labeled_traces(const Env& env, Mode proto, long long n,
                                        std::uint64_t seed, ExecMode mode) {
  std::vector<Trace> out(static_cast<std::size_t>(n));
  auto body = [&](long long i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    out[static_cast<std::size_t>(i)] = sample_labeled_trace(env, proto, rng);
  };
  parallel_for(mode, n, body);
  return out;
}

namespace {

std::vector<double> random_floored_row(int M, double rho, Rng& rng) {
  std::vector<double> e(static_cast<std::size_t>(M));
  double total = 0.0;
  for (double& x : e) {
    x = -std::log(1.0 - rng.uniform01());
    total += x;
  }
  std::vector<double> p(static_cast<std::size_t>(M));
  double mass = 1.0 - rho * M;
  for (int i = 0; i < M; ++i) {
    p[static_cast<std::size_t>(i)] = rho + mass * e[static_cast<std::size_t>(i)] / total;
  }
  return p;
}

}  // namespace

MarginPairStats batch_margin_pairs(long long n, int M, double rho, int k,
                                   std::uint64_t seed, ExecMode mode) {
  std::vector<std::uint8_t> misranked(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> violated(static_cast<std::size_t>(n), 0);
  auto body = [&](long long i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    std::vector<double> q = random_floored_row(M, rho, rng);
    std::vector<double> pi = random_floored_row(M, rho, rng);
    PairCheck chk = check_margin_pair({q.data(), q.size()}, {pi.data(), pi.size()}, k);
    misranked[static_cast<std::size_t>(i)] = chk.misranked ? 1 : 0;
    bool bad = !chk.ok_crude || !chk.ok_linf || !chk.ok_kl || !chk.ok_pinsker;
    violated[static_cast<std::size_t>(i)] = bad ? 1 : 0;
  };
  parallel_for(mode, n, body);
  MarginPairStats st;
  st.pairs = n;
  for (long long i = 0; i < n; ++i) {
    st.misrankings += misranked[static_cast<std::size_t>(i)];
    st.violations += violated[static_cast<std::size_t>(i)];
  }
  return st;
}

double batch_bl_axiom_violation(long long n, int support_points, std::uint64_t seed,
                                ExecMode mode) {
  std::vector<double> worst(static_cast<std::size_t>(n), 0.0);
  auto body = [&](long long i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    FiniteMetric metric = random_metric(support_points * 2, rng);
    auto random_measure = [&]() {
      DiscreteMeasure m;
      for (int p = 0; p < support_points; ++p) {
        m.points.push_back(rng.uniform_int(metric.n));
        m.mass.push_back(rng.uniform(0.0, 2.0));
      }
      return m;
    };
    DiscreteMeasure a = random_measure();
    DiscreteMeasure b = random_measure();
    DiscreteMeasure c = random_measure();
    double ab = d_bl(a, b, metric);
    double ba = d_bl(b, a, metric);
    double ac = d_bl(a, c, metric);
    double cb = d_bl(c, b, metric);
    double aa = d_bl(a, a, metric);
    double v = 0.0;
    v = std::max(v, std::abs(ab - ba));          // symmetry
    v = std::max(v, ab - (ac + cb));             // triangle
    v = std::max(v, -ab);                        // nonnegativity
    v = std::max(v, std::abs(aa));               // identity
    worst[static_cast<std::size_t>(i)] = v;
  };
  parallel_for(mode, n, body);
  double v = 0.0;
  for (double x : worst) v = std::max(v, x);
  return v;
}

}  // namespace prooflab
