// Benchmark: OpenMP batch kernels against their serial references. Each lane
// first checks that both variants produce identical results, then reports
// wall time and speedup.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "prooflab/instance.hpp"
#include "prooflab/parallel.hpp"
#include "prooflab/samplers.hpp"

using namespace prooflab;

namespace {

double time_ms(const std::function<void()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  body();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void report(const char* name, double serial_ms, double omp_ms, bool equal) {
  std::printf("%-28s serial %9.1f ms   openmp %9.1f ms   speedup %5.2fx   %s\n", name,
              serial_ms, omp_ms, serial_ms / omp_ms, equal ? "results-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("prooflab kernel benchmark (threads=%d)\n\n", openmp_threads());

  {
    Rng rng(1);
    RandomMdpParams rp;
    rp.num_layers = 5;
    RandomMdp inst = random_mdp(rp, rng);
    const long long n = 400000;
    std::vector<std::uint8_t> a, b;
    double s = time_ms([&] {
      a = batch_rollout_success(inst.kernel, inst.q(), 7, inst.kernel.start, n, 9,
                                ExecMode::Serial);
    });
    double o = time_ms([&] {
      b = batch_rollout_success(inst.kernel, inst.q(), 7, inst.kernel.start, n, 9,
                                ExecMode::OpenMP);
    });
    report("batch_rollout_success", s, o, a == b);
  }

  {
    GenParams p;
    p.D = 3;
    p.b_eff = 2;
    p.r = 2;
    Env env = make_env(p, 2);
    const long long n = 20000;
    std::vector<Trace> a, b;
    double s = time_ms([&] { a = batch_labeled_traces(env, Mode::Flat, n, 11, ExecMode::Serial); });
    double o = time_ms([&] { b = batch_labeled_traces(env, Mode::Flat, n, 11, ExecMode::OpenMP); });
    bool equal = a.size() == b.size();
    for (std::size_t i = 0; equal && i < a.size(); ++i) {
      equal = a[i].steps.size() == b[i].steps.size();
    }
    report("batch_labeled_traces", s, o, equal);
  }

  {
    Rng rng(3);
    RandomMdp inst = random_mdp({}, rng);
    const int L = 6;
    SuccessToGo h = success_to_go(inst.kernel, inst.q(), L);
    TwistFn trunc = truncated_twist(inst.kernel, inst.q(), 2);
    SmcOptions serial;
    serial.num_particles = 1 << 15;
    SmcOptions par = serial;
    par.parallel = 1;
    SmcResult ra, rb;
    double s = time_ms([&] {
      Rng r(21);
      for (int rep = 0; rep < 12; ++rep) {
        ra = twisted_smc(inst.kernel, inst.q(), trunc, L, serial, inst.kernel.start, r);
      }
    });
    double o = time_ms([&] {
      Rng r(21);
      for (int rep = 0; rep < 12; ++rep) {
        rb = twisted_smc(inst.kernel, inst.q(), trunc, L, par, inst.kernel.start, r);
      }
    });
    report("twisted_smc sweep", s, o, ra.ess == rb.ess);
  }

  {
    MarginPairStats a, b;
    double s = time_ms([&] { a = batch_margin_pairs(500000, 5, 0.02, 2, 4, ExecMode::Serial); });
    double o = time_ms([&] { b = batch_margin_pairs(500000, 5, 0.02, 2, 4, ExecMode::OpenMP); });
    report("batch_margin_pairs", s, o,
           a.misrankings == b.misrankings && a.violations == b.violations);
  }

  {
    double a = 0, b = 0;
    double s = time_ms([&] { a = batch_bl_axiom_violation(1500, 5, 5, ExecMode::Serial); });
    double o = time_ms([&] { b = batch_bl_axiom_violation(1500, 5, 5, ExecMode::OpenMP); });
    report("batch_bl_axiom_triples", s, o, a == b);
  }

  return 0;
}
