#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "prooflab/errors.hpp"

namespace prooflab {

// splitmix64 step; used only to spread seed bits, never as the main engine.
inline std::uint64_t splitmix64_next(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for substream `stream` of `master`. Trials, instances and particles
// each get their own stream so results do not depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t x = master ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  std::uint64_t a = splitmix64_next(x);
  std::uint64_t b = splitmix64_next(x);
  return a ^ (b << 1) ^ (b >> 63);
}

// Deterministic RNG stream. mt19937_64 is fully specified by the standard, so
// identical seeds reproduce identical draws on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t stream_id) {
    return Rng(derive_seed(master, stream_id));
  }

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in {0, ..., n-1}.
  int uniform_int(int n) {
    if (n <= 0) throw ContractError("uniform_int: n must be positive");
    // Rejection sampling keeps the distribution exact for any n.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % static_cast<std::uint64_t>(n));
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return static_cast<int>(v % static_cast<std::uint64_t>(n));
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Index sampled from an (unnormalized, nonnegative) weight vector.
  int categorical(std::span<const double> w) {
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) throw ContractError("categorical: weights sum to zero");
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int>(i);
    }
    // Rounding pushed u past the last partial sum; return the last positive entry.
    for (std::size_t i = w.size(); i-- > 0;) {
      if (w[i] > 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
  }

  // Geometric on {1, 2, ...} with success probability p: P(k) = p (1-p)^{k-1}.
  long long geometric(double p) {
    if (!(p > 0.0) || p > 1.0) throw ContractError("geometric: p must be in (0, 1]");
    if (p >= 1.0) return 1;
    double u = uniform01();
    long long k = 1 + static_cast<long long>(std::floor(std::log1p(-u) / std::log1p(-p)));
    return k < 1 ? 1 : k;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace prooflab
