#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "prooflab/instance.hpp"
#include "prooflab/mdp.hpp"
#include "prooflab/search.hpp"

namespace prooflab {

// The batch kernels below come in two variants sharing one per-item body:
// a plain serial loop (the reference implementation the tests compare
// against) and an OpenMP worksharing loop. Every item owns an RNG stream
// derived from (seed, item index) and writes to its own output slot, so both
// variants produce identical bytes for any thread count.
enum class ExecMode { Serial, OpenMP };

bool openmp_available();
int openmp_threads();

void parallel_for(ExecMode mode, long long n, const std::function<void(long long)>& body);

// Success indicators of n independent policy rollouts (per-trial streams).
std::vector<std::uint8_t> batch_rollout_success(const Kernel& k, const PolicyFn& pi,
                                                int horizon, std::int32_t start,
                                                long long n, std::uint64_t seed,
                                                ExecMode mode);

// Convenience reduction over batch_rollout_success.
long long count_rollout_successes(const Kernel& k, const PolicyFn& pi, int horizon,
                                  std::int32_t start, long long n, std::uint64_t seed,
                                  ExecMode mode);

// Labeled training traces for one instance; slot i holds trace i.
std::vector<Trace> batch_labeled_traces(const Env& env, Mode proto, long long n,
                                        std::uint64_t seed, ExecMode mode);

// Margin-chain property checks over random floored (q, pi) pairs.
struct MarginPairStats {
  long long pairs = 0;
  long long misrankings = 0;
  long long violations = 0;  // any of the chain inequalities
};
MarginPairStats batch_margin_pairs(long long n, int M, double rho, int k,
                                   std::uint64_t seed, ExecMode mode);

// Metric-axiom probes on random discrete measures: returns the worst
// violation of symmetry / triangle / nonnegativity over n seeded triples.
double batch_bl_axiom_violation(long long n, int support_points, std::uint64_t seed,
                                ExecMode mode);

}  // namespace prooflab
