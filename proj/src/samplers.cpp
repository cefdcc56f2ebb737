#include "prooflab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace prooflab {

SuccessToGo success_to_go(const Kernel& k, const PolicyFn& q, int L) {
  if (L < 0) throw ContractError("success_to_go: negative horizon");
  SuccessToGo out;
  out.L = L;
  const std::size_t n = k.nodes.size();
  out.h.assign(static_cast<std::size_t>(L) + 1, std::vector<double>(n, 0.0));
  // h_0(x) = 1{x in G}: zero on every open node.
  for (int r = 1; r <= L; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const Kernel::Node& node = k.nodes[i];
      std::span<const double> p = q(node.cls);
      if (p.size() != node.next.size()) {
        throw ContractError("success_to_go: q undefined on a reachable class");
      }
      double acc = 0.0;
      for (std::size_t a = 0; a < node.next.size(); ++a) {
        acc += p[a] * out.at(r - 1, node.next[a]);
      }
      out.h[static_cast<std::size_t>(r)][i] = acc;
    }
  }
  return out;
}

DoobPolicy::DoobPolicy(const Kernel& k, const PolicyFn& q, const SuccessToGo& h) : L_(h.L) {
  const std::size_t n = k.nodes.size();
  rows_.assign(static_cast<std::size_t>(L_) + 1, {});
  defined_.assign(static_cast<std::size_t>(L_) + 1, std::vector<char>(n, 0));
  for (int r = 1; r <= L_; ++r) {
    auto& level = rows_[static_cast<std::size_t>(r)];
    level.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      double hr = h.at(r, static_cast<std::int32_t>(i));
      if (hr <= 0.0) continue;
      const Kernel::Node& node = k.nodes[i];
      std::span<const double> p = q(node.cls);
      std::vector<double> row(node.next.size(), 0.0);
      for (std::size_t a = 0; a < node.next.size(); ++a) {
        row[a] = p[a] * h.at(r - 1, node.next[a]) / hr;
      }
      level[i] = std::move(row);
      defined_[static_cast<std::size_t>(r)][i] = 1;
    }
  }
}

std::span<const double> DoobPolicy::probs(int r, std::int32_t node) const {
  if (r < 1 || r > L_) throw ContractError("DoobPolicy: remaining steps out of range");
  if (node < 0) throw ContractError("DoobPolicy: terminal state has no actions");
  if (!defined_[static_cast<std::size_t>(r)][static_cast<std::size_t>(node)]) {
    throw ConditioningError("DoobPolicy: h_r(x) = 0, conditioning on a null event");
  }
  const auto& row = rows_[static_cast<std::size_t>(r)][static_cast<std::size_t>(node)];
  return {row.data(), row.size()};
}

Trace doob_rollout(const Kernel& k, const DoobPolicy& qstar, std::int32_t start, Rng& rng) {
  Trace trace;
  std::int32_t cur = start;
  const int L = qstar.horizon();
  for (int t = 0; t < L; ++t) {
    if (cur == kSuccessNode || cur == kFailureNode) break;
    int r = L - t;
    std::span<const double> p = qstar.probs(r, cur);
    int choice = rng.categorical(p);
    const Kernel::Node& node = k.node(cur);
    trace.steps.push_back({t, cur, node.cls, choice, k.classes->at(node.cls).type});
    cur = node.next[static_cast<std::size_t>(choice)];
  }
  if (cur == kSuccessNode) {
    trace.final_status = Status::Success;
  } else if (cur == kFailureNode) {
    trace.final_status = Status::Failure;
  } else {
    trace.final_status = Status::Open;
    trace.final_node = cur;
  }
  return trace;
}

TwistFn exact_twist(const SuccessToGo& h) {
  return [h](int r, std::int32_t node) { return h.at(r, node); };
}

TwistFn constant_twist() {
  return [](int, std::int32_t) { return 1.0; };
}

TwistFn truncated_twist(const Kernel& k, const PolicyFn& q, int m, double floor) {
  SuccessToGo h = success_to_go(k, q, m);
  return [h, m, floor](int r, std::int32_t node) {
    if (node == kFailureNode) return 0.0;
    double v = h.at(std::min(r, m), node);
    return std::max(v, floor);
  };
}

SmcResult twisted_smc(const Kernel& k, const PolicyFn& q, const TwistFn& hhat, int L,
                      const SmcOptions& opt, std::int32_t start, Rng& rng) {
  const int N = opt.num_particles;
  if (N < 2) throw ContractError("twisted_smc: need at least two particles");
  if (L < 1) throw ContractError("twisted_smc: horizon must be positive");

  SmcResult res;
  std::vector<std::int32_t> state(static_cast<std::size_t>(N), start);
  std::vector<double> weight(static_cast<std::size_t>(N), 1.0 / N);
  // Particle-owned streams keep propagation independent of execution order.
  std::uint64_t sweep_seed = rng.bits();
  std::vector<Rng> prng;
  prng.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) prng.push_back(Rng::stream(sweep_seed, static_cast<std::uint64_t>(i)));
  Rng resample_rng = Rng::stream(sweep_seed, 0xabcdef);

  // choices[t][i]: action of particle i at step t; parents[t][i]: its ancestor.
  std::vector<std::vector<int>> choices(static_cast<std::size_t>(L),
                                        std::vector<int>(static_cast<std::size_t>(N), -1));
  res.ancestors.assign(static_cast<std::size_t>(L),
                       std::vector<int>(static_cast<std::size_t>(N), 0));

  std::vector<char> twist_fault(static_cast<std::size_t>(N), 0);
  for (int t = 0; t < L; ++t) {
    const int r = L - t;  // remaining steps
    auto propagate = [&](int i) {
      auto ui = static_cast<std::size_t>(i);
      std::int32_t cur = state[ui];
      if (cur == kSuccessNode) return;  // absorbed in G; weight unchanged
      if (cur == kFailureNode) {
        // Under the deferred option the failure potential only bites at t = L.
        if (opt.per_step_success_potential) weight[ui] = 0.0;
        return;
      }
      const Kernel::Node& node = k.node(cur);
      std::span<const double> p = q(node.cls);
      thread_local std::vector<double> prop;
      prop.assign(node.next.size(), 0.0);
      double z = 0.0;
      for (std::size_t a = 0; a < node.next.size(); ++a) {
        double tw = hhat(r - 1, node.next[a]);
        if (!(tw >= 0.0) || !std::isfinite(tw)) {
          twist_fault[ui] = 1;
          return;
        }
        prop[a] = p[a] * tw;
        z += prop[a];
      }
      if (z <= 0.0) {
        weight[ui] = 0.0;  // the twist rules out every continuation
        return;
      }
      double twist_here = hhat(r, cur);
      if (twist_here <= 0.0) {
        twist_fault[ui] = 2;
        return;
      }
      int a = prng[ui].categorical(prop);
      choices[static_cast<std::size_t>(t)][ui] = a;
      std::int32_t nxt = node.next[static_cast<std::size_t>(a)];
      // Twisted Feynman-Kac increment: with hhat = h it telescopes to 1, so
      // weights stay constant; with hhat == 1 it degenerates to the bootstrap
      // potential.
      double incr = z / twist_here;
      if (opt.per_step_success_potential && nxt == kFailureNode) incr = 0.0;
      state[ui] = nxt;
      weight[ui] *= incr;
    };
#ifdef _OPENMP
    if (opt.parallel) {
#pragma omp parallel for schedule(static)
      for (int i = 0; i < N; ++i) propagate(i);
    } else {
      for (int i = 0; i < N; ++i) propagate(i);
    }
#else
    for (int i = 0; i < N; ++i) propagate(i);
#endif
    for (int i = 0; i < N; ++i) {
      char f = twist_fault[static_cast<std::size_t>(i)];
      if (f == 1) throw ContractError("twisted_smc: twist must be finite and nonnegative");
      if (f == 2) {
        throw ContractError("twisted_smc: twist must be positive on the reachable support");
      }
    }

    // Diagnostics before any resampling.
    double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
    double ess = 0.0;
    if (wsum > 0.0) {
      double sq = 0.0;
      for (double w : weight) sq += (w / wsum) * (w / wsum);
      ess = 1.0 / sq;
    }
    res.ess.push_back(ess);
    double mean_log = 0.0;
    int alive = 0;
    for (double w : weight) {
      if (w > 0.0) {
        mean_log += std::log(w);
        alive++;
      }
    }
    double var_log = 0.0;
    if (alive > 0) {
      mean_log /= alive;
      for (double w : weight) {
        if (w > 0.0) var_log += (std::log(w) - mean_log) * (std::log(w) - mean_log);
      }
      var_log /= alive;
    }
    res.logw_variance.push_back(var_log);

    auto& anc = res.ancestors[static_cast<std::size_t>(t)];
    std::iota(anc.begin(), anc.end(), 0);
    bool do_resample = opt.ess_frac > 0.0 && wsum > 0.0 && ess < opt.ess_frac * N &&
                       t + 1 < L;
    res.resampled.push_back(do_resample ? 1 : 0);
    if (do_resample) {
      // Multinomial resampling via the cumulative table; O(N log N).
      std::vector<double> cdf(static_cast<std::size_t>(N));
      double acc = 0.0;
      for (int i = 0; i < N; ++i) {
        acc += weight[static_cast<std::size_t>(i)];
        cdf[static_cast<std::size_t>(i)] = acc;
      }
      std::vector<std::int32_t> new_state(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) {
        double u = resample_rng.uniform01() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        int j = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), N - 1));
        anc[static_cast<std::size_t>(i)] = j;
        new_state[static_cast<std::size_t>(i)] = state[static_cast<std::size_t>(j)];
      }
      state = std::move(new_state);
      std::fill(weight.begin(), weight.end(), 1.0 / N);
    }
  }

  // Terminal reweighting: kill everything outside G and divide out the final
  // twist so the surviving law is exactly the success-conditioned one.
  int alive = 0;
  for (int i = 0; i < N; ++i) {
    auto ui = static_cast<std::size_t>(i);
    if (state[ui] != kSuccessNode) {
      weight[ui] = 0.0;
    } else if (weight[ui] > 0.0) {
      double h0 = hhat(0, state[ui]);
      if (h0 <= 0.0) {
        throw ContractError("twisted_smc: twist must be positive on the goal set");
      }
      weight[ui] /= h0;
    }
    if (weight[ui] > 0.0) alive++;
  }
  res.final_alive_fraction = static_cast<double>(alive) / N;
  double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
  if (wsum <= 0.0) {
    res.found = false;  // no survivor; a result, not an error
    return res;
  }

  // Backward pass: single-index ancestor tracing.
  int idx = resample_rng.categorical(weight);
  std::vector<int> actions;
  actions.reserve(static_cast<std::size_t>(L));
  for (int t = L - 1; t >= 0; --t) {
    actions.push_back(choices[static_cast<std::size_t>(t)][static_cast<std::size_t>(idx)]);
    idx = res.ancestors[static_cast<std::size_t>(t)][static_cast<std::size_t>(idx)];
  }
  std::reverse(actions.begin(), actions.end());

  // Reconstruct the trajectory from the start, verifying each transition.
  Trace trace;
  std::int32_t cur = start;
  for (int t = 0; t < L && cur >= 0; ++t) {
    int a = actions[static_cast<std::size_t>(t)];
    if (a < 0) break;  // ancestor was already absorbed
    const Kernel::Node& node = k.node(cur);
    trace.steps.push_back({t, cur, node.cls, a, k.classes->at(node.cls).type});
    cur = step(k, cur, a);
  }
  trace.final_status = cur == kSuccessNode ? Status::Success
                       : cur == kFailureNode ? Status::Failure
                                             : Status::Open;
  if (cur >= 0) trace.final_node = cur;
  res.trace = std::move(trace);
  res.found = res.trace.final_status == Status::Success;
  return res;
}

// ---- Path enumeration ---------------------------------------------------------

namespace {

void enumerate_rec(const Kernel& k, const PolicyFn& q, int L, std::int32_t node,
                   std::vector<int>& prefix, double mass, bool successful_only,
                   long long max_paths, PathLaw& out) {
  if (node == kSuccessNode || node == kFailureNode ||
      static_cast<int>(prefix.size()) == L) {
    bool success = node == kSuccessNode;
    if (!successful_only || success) {
      out.prob[prefix] += mass;
      out.total_mass += mass;
      if (static_cast<long long>(out.prob.size()) > max_paths) {
        throw ResourceError("enumerate_paths: path count exceeds cap");
      }
    }
    return;
  }
  const Kernel::Node& n = k.node(node);
  std::span<const double> p = q(n.cls);
  for (std::size_t a = 0; a < n.next.size(); ++a) {
    if (p[a] <= 0.0) continue;
    prefix.push_back(static_cast<int>(a));
    enumerate_rec(k, q, L, n.next[a], prefix, mass * p[a], successful_only, max_paths, out);
    prefix.pop_back();
  }
}

}  // namespace

PathLaw enumerate_paths(const Kernel& k, const PolicyFn& q, int L, std::int32_t start,
                        bool successful_only, long long max_paths) {
  PathLaw law;
  std::vector<int> prefix;
  enumerate_rec(k, q, L, start, prefix, 1.0, successful_only, max_paths, law);
  if (successful_only) {
    if (law.total_mass <= 0.0) {
      throw ConditioningError("enumerate_paths: no successful path to condition on");
    }
    for (auto& [path, p] : law.prob) p /= law.total_mass;
    law.total_mass = 1.0;
  }
  return law;
}

namespace {

void doob_rec(const Kernel& k, const DoobPolicy& qstar, int L, int t, std::int32_t node,
              std::vector<int>& prefix, double mass, long long max_paths, PathLaw& out) {
  if (node == kSuccessNode || node == kFailureNode || t == L) {
    out.prob[prefix] += mass;
    out.total_mass += mass;
    if (static_cast<long long>(out.prob.size()) > max_paths) {
      throw ResourceError("doob_path_law: path count exceeds cap");
    }
    return;
  }
  std::span<const double> p = qstar.probs(L - t, node);
  const Kernel::Node& n = k.node(node);
  for (std::size_t a = 0; a < n.next.size(); ++a) {
    if (p[a] <= 0.0) continue;
    prefix.push_back(static_cast<int>(a));
    doob_rec(k, qstar, L, t + 1, n.next[a], prefix, mass * p[a], max_paths, out);
    prefix.pop_back();
  }
}

}  // namespace

PathLaw doob_path_law(const Kernel& k, const DoobPolicy& qstar, int L, std::int32_t start,
                      long long max_paths) {
  PathLaw law;
  std::vector<int> prefix;
  doob_rec(k, qstar, L, 0, start, prefix, 1.0, max_paths, law);
  return law;
}

double total_variation(const PathLaw& a, const PathLaw& b) {
  double tv = 0.0;
  for (const auto& [path, pa] : a.prob) {
    auto it = b.prob.find(path);
    double pb = it == b.prob.end() ? 0.0 : it->second;
    tv += std::abs(pa - pb);
  }
  for (const auto& [path, pb] : b.prob) {
    if (!a.prob.count(path)) tv += pb;
  }
  return tv / 2.0;
}

}  // namespace prooflab
