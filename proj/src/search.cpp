#include "prooflab/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace prooflab {

std::vector<int> top_k(std::span<const double> probs, int k) {
  const int m = static_cast<int>(probs.size());
  if (k > m) throw ContractError("top_k: k exceeds the candidate count");
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[static_cast<std::size_t>(a)] != probs[static_cast<std::size_t>(b)]) {
      return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    }
    return a < b;  // ties: lower index wins
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

bool coverage_event(const Trace& trace, const PolicyFn& pi, const TopKConfig& cfg,
                    const ClassTable& classes) {
  for (const TraceStep& s : trace.steps) {
    int k = cfg.k_for(classes.at(s.cls).type);
    std::vector<int> list = top_k(pi(s.cls), std::min(k, classes.at(s.cls).num_candidates));
    if (std::find(list.begin(), list.end(), s.choice) == list.end()) return false;
  }
  return true;
}

namespace {

struct SearchCtx {
  const Env* env;
  Mode mode;
  const PolicyFn* pi;
  const TopKConfig* cfg;
  bool memo;
  long long budget;
  long long expansions = 0;
  bool exhausted = false;
  std::vector<char> memo_state;  // per uid: 0 unknown, 1 solved, 2 failed
  std::vector<std::pair<int, int>> proof;

  bool spend() {
    if (expansions >= budget) {
      exhausted = true;
      return false;
    }
    expansions++;
    return true;
  }
};

// Tries the top-k candidates of `cls` in rank order; the verifier accepts
// exactly the reference action. Returns the accepted action or -1.
int try_or_node(SearchCtx& ctx, int cls, int k) {
  const DecisionClass& dc = ctx.mode == Mode::Hier ? ctx.env->hier.table->at(cls)
                                                   : ctx.env->flat.table->at(cls);
  std::vector<int> list = top_k((*ctx.pi)(cls), std::min(k, dc.num_candidates));
  for (int cand : list) {
    if (!ctx.spend()) return -1;
    if (cand == dc.reference) return cand;
    // else: kernel rejection, backtrack to the next candidate
  }
  return -1;
}

bool solve_terminal(SearchCtx& ctx, int solver_len, const std::vector<int>& sol_cls) {
  for (int rem = solver_len; rem >= 1; --rem) {
    int cls = sol_cls[static_cast<std::size_t>(rem - 1)];
    int got = try_or_node(ctx, cls, ctx.cfg->k_for(DecisionType::Sol));
    if (got < 0) return false;
    ctx.proof.emplace_back(cls, got);
  }
  return true;
}

bool solve_hier(SearchCtx& ctx, int uid) {
  if (ctx.memo) {
    char s = ctx.memo_state[static_cast<std::size_t>(uid)];
    if (s == 1) return true;
    if (s == 2) return false;
  }
  const DagNode& n = ctx.env->dag.node(uid);
  bool ok;
  if (n.terminal) {
    ok = solve_terminal(ctx, n.solver_len,
                        ctx.env->hier.sol_cls[static_cast<std::size_t>(uid)]);
  } else {
    int cls = ctx.env->hier.dec_cls[static_cast<std::size_t>(uid)];
    int got = try_or_node(ctx, cls, ctx.cfg->k_for(DecisionType::Dec));
    ok = got >= 0;
    if (ok) {
      ctx.proof.emplace_back(cls, got);
      for (int child : n.children) {
        if (!solve_hier(ctx, child)) {
          ok = false;
          break;
        }
      }
    }
  }
  if (ctx.memo && !ctx.exhausted) {
    ctx.memo_state[static_cast<std::size_t>(uid)] = ok ? 1 : 2;
  }
  return ok;
}

bool solve_flat(SearchCtx& ctx, int occ) {
  const TreeNode& t = ctx.env->tree.node(occ);
  const DagNode& n = ctx.env->dag.node(t.uid);
  if (n.terminal) {
    return solve_terminal(ctx, n.solver_len,
                          ctx.env->flat.sol_cls[static_cast<std::size_t>(occ)]);
  }
  int cls = ctx.env->flat.dec_cls[static_cast<std::size_t>(occ)];
  int got = try_or_node(ctx, cls, ctx.cfg->k_for(DecisionType::Flat));
  if (got < 0) return false;
  ctx.proof.emplace_back(cls, got);
  for (int child : t.children) {
    if (!solve_flat(ctx, child)) return false;
  }
  return true;
}

}  // namespace

SearchResult backtracking_search(const Env& env, Mode mode, const PolicyFn& pi,
                                 const TopKConfig& cfg, bool memo) {
  SearchCtx ctx;
  ctx.env = &env;
  ctx.mode = mode;
  ctx.pi = &pi;
  ctx.cfg = &cfg;
  ctx.memo = memo && mode == Mode::Hier;
  ctx.budget = cfg.budget > 0 ? cfg.budget : 10 * env.counts.n_flat;
  if (ctx.budget <= 0) throw ContractError("backtracking_search: budget must be positive");
  if (ctx.memo) ctx.memo_state.assign(env.dag.nodes.size(), 0);

  SearchResult res;
  bool ok = mode == Mode::Hier ? solve_hier(ctx, env.dag.root) : solve_flat(ctx, env.tree.root);
  res.success = ok && !ctx.exhausted;
  res.budget_exhausted = ctx.exhausted;
  res.expansions = ctx.expansions;
  if (res.success) res.proof = std::move(ctx.proof);
  return res;
}

// ---- Margin statistics ----------------------------------------------------------

PairCheck check_margin_pair(std::span<const double> q, std::span<const double> pi, int k) {
  constexpr double kTol = 1e-12;
  PairCheck out;
  const int m = static_cast<int>(q.size());
  std::vector<int> tq = top_k(q, k);
  std::vector<int> tp = top_k(pi, k);
  std::vector<int> sq = tq, sp = tp;
  std::sort(sq.begin(), sq.end());
  std::sort(sp.begin(), sp.end());
  out.misranked = sq != sp;

  std::vector<double> sorted(q.begin(), q.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double qk = sorted[static_cast<std::size_t>(k - 1)];
  double qk1 = k < m ? sorted[static_cast<std::size_t>(k)] : 0.0;
  double gap = qk - qk1;

  double mk = 0.0;
  for (int a : tq) mk += q[static_cast<std::size_t>(a)];
  double pi_topk_q = 0.0;
  for (int a : tp) pi_topk_q += q[static_cast<std::size_t>(a)];

  double linf = 0.0;
  double kl = 0.0;
  for (int a = 0; a < m; ++a) {
    auto ua = static_cast<std::size_t>(a);
    linf = std::max(linf, std::abs(pi[ua] - q[ua]));
    if (q[ua] > 0.0) kl += q[ua] * (std::log(q[ua]) - std::log(pi[ua]));
  }

  out.ok_crude = 1.0 - pi_topk_q <= (1.0 - mk) + (out.misranked ? 1.0 : 0.0) + kTol;
  out.ok_linf = !out.misranked || linf >= gap / 2.0 - kTol;
  out.ok_kl = !out.misranked || kl >= gap * gap / 8.0 - kTol;
  out.ok_pinsker = linf * linf <= 2.0 * kl + kTol;
  return out;
}

MarginAuditResult margin_audit(const PolicyFn& pi, const GeneratorConditionals& q,
                               const ClassTable& classes, std::span<const double> weights,
                               int k, double beta, double C0) {
  MarginAuditResult res;
  double weight_total = 0.0;
  for (int c = 0; c < classes.size(); ++c) {
    auto uc = static_cast<std::size_t>(c);
    double w = weights[uc];
    if (w <= 0.0) continue;
    const auto& qrow = q.probs[uc];
    std::span<const double> prow = pi(c);
    int kk = std::min(k, static_cast<int>(qrow.size()));
    PairCheck chk = check_margin_pair({qrow.data(), qrow.size()}, prow, kk);

    std::vector<double> sorted(qrow.begin(), qrow.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double mk = 0.0;
    for (int i = 0; i < kk; ++i) mk += sorted[static_cast<std::size_t>(i)];
    double kl = 0.0;
    for (std::size_t a = 0; a < qrow.size(); ++a) {
      if (qrow[a] > 0.0) kl += qrow[a] * (std::log(qrow[a]) - std::log(prow[a]));
    }

    res.points++;
    weight_total += w;
    if (chk.misranked) {
      res.misrankings++;
      res.misrank_rate += w;
    }
    res.mean_topk_loss += w * (1.0 - mk);
    res.mean_kl += w * kl;
    if (!chk.ok_crude) res.viol_crude++;
    if (!chk.ok_linf) res.viol_linf++;
    if (!chk.ok_kl) res.viol_kl++;
    if (!chk.ok_pinsker) res.viol_pinsker++;
  }
  if (weight_total > 0.0) {
    res.misrank_rate /= weight_total;
    res.mean_topk_loss /= weight_total;
    res.mean_kl /= weight_total;
  }
  // Empirically optimal threshold of the misranking tradeoff
  // C0 u^beta + 8 KLbar / u^2 over a log grid.
  double best = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 400; ++i) {
    double u = std::exp(std::log(1e-4) + (std::log(1.0) - std::log(1e-4)) * i / 400.0);
    double v = C0 * std::pow(u, beta) + 8.0 * res.mean_kl / (u * u);
    if (v < best) {
      best = v;
      res.best_u = u;
    }
  }
  res.best_u_bound = best;
  return res;
}

}  // namespace prooflab
