#include "prooflab/learners.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

namespace prooflab {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}
}  // namespace

PolicyFn TabularPolicy::view() const {
  const auto* rows_ptr = &rows;
  return [rows_ptr](int cls) -> std::span<const double> {
    const auto& row = rows_ptr->at(static_cast<std::size_t>(cls));
    return {row.data(), row.size()};
  };
}

TabularPolicy TabularPolicy::uniform(const ClassTable& classes, double rho) {
  TabularPolicy p;
  p.rho = rho;
  p.rows.reserve(classes.classes.size());
  for (const DecisionClass& dc : classes.classes) {
    p.rows.emplace_back(static_cast<std::size_t>(dc.num_candidates),
                        1.0 / dc.num_candidates);
  }
  return p;
}

std::vector<double> floor_projected_mle(std::span<const double> counts, int M, double rho) {
  if (static_cast<int>(counts.size()) != M) {
    throw ContractError("floor_projected_mle: count vector size mismatch");
  }
  if (rho < 0.0 || rho * M > 1.0) throw ContractError("floor_projected_mle: bad floor");
  double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> p(static_cast<std::size_t>(M), 0.0);
  if (total <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / M);
    return p;
  }
  // KKT: p_i = max(rho, c_i / lambda); drop entries below the floor until stable.
  std::vector<char> active(static_cast<std::size_t>(M), 0);
  int num_active = 0;
  for (int i = 0; i < M; ++i) {
    if (counts[static_cast<std::size_t>(i)] > 0.0) {
      active[static_cast<std::size_t>(i)] = 1;
      num_active++;
    }
  }
  for (;;) {
    double mass = 1.0 - rho * (M - num_active);
    double csum = 0.0;
    for (int i = 0; i < M; ++i) {
      if (active[static_cast<std::size_t>(i)]) csum += counts[static_cast<std::size_t>(i)];
    }
    double lambda = csum / mass;
    bool changed = false;
    for (int i = 0; i < M; ++i) {
      if (active[static_cast<std::size_t>(i)] &&
          counts[static_cast<std::size_t>(i)] / lambda < rho) {
        active[static_cast<std::size_t>(i)] = 0;
        num_active--;
        changed = true;
      }
    }
    if (!changed) {
      for (int i = 0; i < M; ++i) {
        auto ui = static_cast<std::size_t>(i);
        p[ui] = active[ui] ? counts[ui] / lambda : rho;
      }
      return p;
    }
  }
}

void Dataset::append(const Trace& trace, int trace_id) {
  for (const TraceStep& s : trace.steps) {
    rows.push_back({s.cls, s.choice, s.type, trace_id});
  }
  num_traces++;
}

Dataset sample_dataset(const Env& env, Mode mode, int n_traces, Rng& rng) {
  Dataset data;
  for (int i = 0; i < n_traces; ++i) {
    data.append(sample_labeled_trace(env, mode, rng), i);
  }
  return data;
}

TabularPolicy erm_fit(const ClassTable& classes, const Dataset& data, const FitOptions& opt) {
  const int n = classes.size();
  if (opt.class_group && static_cast<int>(opt.class_group->size()) != n) {
    throw ContractError("erm_fit: class_group size mismatch");
  }
  // Counts per fit group (group == class unless coarsened).
  int num_groups = n;
  if (opt.class_group) {
    num_groups = 0;
    for (int g : *opt.class_group) num_groups = std::max(num_groups, g + 1);
  }
  std::vector<std::vector<double>> counts(static_cast<std::size_t>(num_groups));
  auto group_of = [&](int cls) { return opt.class_group ? (*opt.class_group)[static_cast<std::size_t>(cls)] : cls; };
  for (int c = 0; c < n; ++c) {
    int g = group_of(c);
    auto& v = counts[static_cast<std::size_t>(g)];
    if (v.empty()) v.assign(static_cast<std::size_t>(classes.at(c).num_candidates), 0.0);
  }
  for (const DatasetRow& row : data.rows) {
    if (opt.type_filter && row.type != *opt.type_filter) continue;
    counts[static_cast<std::size_t>(group_of(row.cls))][static_cast<std::size_t>(row.choice)] += 1.0;
  }
  TabularPolicy out;
  out.rho = opt.rho;
  out.rows.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> group_rows(static_cast<std::size_t>(num_groups));
  for (int c = 0; c < n; ++c) {
    int g = group_of(c);
    auto& gr = group_rows[static_cast<std::size_t>(g)];
    if (gr.empty()) {
      const auto& cnt = counts[static_cast<std::size_t>(g)];
      gr = floor_projected_mle({cnt.data(), cnt.size()},
                               static_cast<int>(cnt.size()), opt.rho);
    }
    out.rows[static_cast<std::size_t>(c)] = gr;
  }
  return out;
}

std::vector<int> coarse_group_by_depth(const ClassTable& classes) {
  std::vector<int> group(static_cast<std::size_t>(classes.size()), 0);
  std::map<std::tuple<int, int, int>, int> index;
  for (int c = 0; c < classes.size(); ++c) {
    const DecisionClass& dc = classes.at(c);
    auto key = std::make_tuple(static_cast<int>(dc.type), dc.depth, dc.remaining);
    auto [it, fresh] = index.emplace(key, static_cast<int>(index.size()));
    group[static_cast<std::size_t>(c)] = it->second;
  }
  return group;
}

std::vector<double> empirical_class_weights(const Dataset& data, int num_classes,
                                            std::optional<DecisionType> filter) {
  std::vector<double> w(static_cast<std::size_t>(num_classes), 0.0);
  double total = 0.0;
  for (const DatasetRow& row : data.rows) {
    if (filter && row.type != *filter) continue;
    w[static_cast<std::size_t>(row.cls)] += 1.0;
    total += 1.0;
  }
  if (total > 0.0) {
    for (double& x : w) x /= total;
  }
  return w;
}

std::vector<double> exact_class_weights(const ClassTable& classes,
                                        std::optional<DecisionType> filter) {
  std::vector<double> w(static_cast<std::size_t>(classes.size()), 0.0);
  double total = 0.0;
  for (int c = 0; c < classes.size(); ++c) {
    if (filter && classes.at(c).type != *filter) continue;
    w[static_cast<std::size_t>(c)] = 1.0;
    total += 1.0;
  }
  if (total > 0.0) {
    for (double& x : w) x /= total;
  }
  return w;
}

double mixture_kl(const PolicyFn& pi, const GeneratorConditionals& q,
                  std::span<const double> weights) {
  double acc = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    if (weights[c] <= 0.0) continue;
    const auto& qr = q.probs.at(c);
    std::span<const double> pr = pi(static_cast<int>(c));
    if (pr.size() != qr.size()) throw ContractError("mixture_kl: policy undefined on mixture support");
    double kl = 0.0;
    for (std::size_t a = 0; a < qr.size(); ++a) {
      if (qr[a] > 0.0) kl += qr[a] * (std::log(qr[a]) - std::log(pr[a]));
    }
    acc += weights[c] * kl;
  }
  return acc;
}

double expected_risk(const PolicyFn& pi, const GeneratorConditionals& q,
                     std::span<const double> weights) {
  double acc = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    if (weights[c] <= 0.0) continue;
    const auto& qr = q.probs.at(c);
    std::span<const double> pr = pi(static_cast<int>(c));
    double r = 0.0;
    for (std::size_t a = 0; a < qr.size(); ++a) {
      if (qr[a] > 0.0) r -= qr[a] * std::log(pr[a]);
    }
    acc += weights[c] * r;
  }
  return acc;
}

double empirical_risk(const Dataset& data, const PolicyFn& pi) {
  if (data.rows.empty()) return 0.0;
  double acc = 0.0;
  for (const DatasetRow& row : data.rows) {
    acc -= std::log(pi(row.cls)[static_cast<std::size_t>(row.choice)]);
  }
  return acc / static_cast<double>(data.rows.size());
}

GeneratorConditionals empirical_conditionals(const Dataset& data, const ClassTable& classes) {
  GeneratorConditionals q;
  q.probs.resize(static_cast<std::size_t>(classes.size()));
  q.gaps.assign(static_cast<std::size_t>(classes.size()), 0.0);
  std::vector<std::vector<double>> counts(static_cast<std::size_t>(classes.size()));
  for (int c = 0; c < classes.size(); ++c) {
    counts[static_cast<std::size_t>(c)].assign(
        static_cast<std::size_t>(classes.at(c).num_candidates), 0.0);
  }
  for (const DatasetRow& row : data.rows) {
    counts[static_cast<std::size_t>(row.cls)][static_cast<std::size_t>(row.choice)] += 1.0;
  }
  for (int c = 0; c < classes.size(); ++c) {
    auto& cnt = counts[static_cast<std::size_t>(c)];
    double total = std::accumulate(cnt.begin(), cnt.end(), 0.0);
    auto& row = q.probs[static_cast<std::size_t>(c)];
    row.resize(cnt.size());
    if (total > 0.0) {
      for (std::size_t a = 0; a < cnt.size(); ++a) row[a] = cnt[a] / total;
    } else {
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(cnt.size()));
    }
  }
  return q;
}

// ---- Latent terminal-flag model --------------------------------------------------

void LatentModel::build_index() {
  dec_index.assign(static_cast<std::size_t>(D) + 1, -1);
  sol_index.assign(static_cast<std::size_t>(D) + 1, {});
  for (int c = 0; c < classes->size(); ++c) {
    const DecisionClass& dc = classes->at(c);
    auto d = static_cast<std::size_t>(dc.depth);
    if (dc.type == DecisionType::Dec) {
      dec_index[d] = c;
    } else if (dc.type == DecisionType::Sol) {
      auto& v = sol_index[d];
      if (static_cast<int>(v.size()) < dc.remaining) v.resize(static_cast<std::size_t>(dc.remaining), -1);
      v[static_cast<std::size_t>(dc.remaining - 1)] = c;
    }
  }
}

int LatentModel::dec_cls(int depth) const {
  int c = dec_index.at(static_cast<std::size_t>(depth));
  return c;
}

int LatentModel::sol_cls(int depth, int remaining) const {
  const auto& v = sol_index.at(static_cast<std::size_t>(depth));
  if (remaining < 1 || remaining > static_cast<int>(v.size())) return -1;
  return v[static_cast<std::size_t>(remaining - 1)];
}

double LatentModel::length_log_prob(int depth, int len) const {
  double mean = K0 * std::pow(alpha, depth);
  if (mean <= 1.0) return len == 1 ? 0.0 : kNegInf;
  double p = 1.0 / mean;
  return std::log(p) + (len - 1) * std::log1p(-p);
}

LatentModel make_latent_model(const GenParams& params, int len_cap, Rng& rng) {
  params.validate();
  if (len_cap < 1) throw ContractError("make_latent_model: len_cap must be >= 1");
  LatentModel m;
  m.D = params.D;
  m.b_eff = params.b_eff;
  m.M = params.M;
  m.rho = params.rho;
  m.alpha = params.alpha;
  m.K0 = params.K0;
  m.term_profile.assign(static_cast<std::size_t>(m.D) + 1, 0.0);
  for (int d = 0; d <= m.D; ++d) {
    m.term_profile[static_cast<std::size_t>(d)] = params.terminal_prob(d);
  }
  auto table = std::make_shared<ClassTable>();
  for (int d = 0; d < m.D; ++d) {
    DecisionClass dc;
    dc.key = "dec:d" + std::to_string(d);
    dc.type = DecisionType::Dec;
    dc.num_candidates = m.M;
    dc.reference = rng.uniform_int(m.M);
    dc.depth = d;
    table->classes.push_back(std::move(dc));
  }
  for (int d = 1; d <= m.D; ++d) {
    for (int rem = 1; rem <= len_cap; ++rem) {
      DecisionClass dc;
      dc.key = "sol:d" + std::to_string(d) + ":r" + std::to_string(rem);
      dc.type = DecisionType::Sol;
      dc.num_candidates = m.M;
      dc.reference = rng.uniform_int(m.M);
      dc.depth = d;
      dc.remaining = rem;
      table->classes.push_back(std::move(dc));
    }
  }
  GeneratorConditionals q = make_conditionals(*table, params, rng);
  m.classes = table;
  m.label_probs = std::move(q.probs);
  m.build_index();
  return m;
}

LatentObservation observe_masked(const ProofDag& z, const LatentModel& truth, Rng& rng) {
  LatentObservation y;
  y.C.assign(static_cast<std::size_t>(z.max_depth) + 1, 0);
  for (const DagNode& n : z.nodes) {
    NodeObservation obs;
    obs.depth = n.depth;
    if (n.terminal) {
      for (int rem = n.solver_len; rem >= 1; --rem) {
        int cls = truth.sol_cls(n.depth, rem);
        if (cls < 0) throw ContractError("observe_masked: missing solver class");
        const auto& p = truth.label_probs.at(static_cast<std::size_t>(cls));
        obs.labels.push_back(rng.categorical({p.data(), p.size()}));
      }
    } else {
      int cls = truth.dec_cls(n.depth);
      if (cls < 0) throw ContractError("observe_masked: missing decomposition class");
      const auto& p = truth.label_probs.at(static_cast<std::size_t>(cls));
      obs.labels.push_back(rng.categorical({p.data(), p.size()}));
    }
    y.C[static_cast<std::size_t>(n.depth)]++;
    y.nodes.push_back(std::move(obs));
  }
  return y;
}

namespace {

// Indices of observation nodes per depth plus the per-depth required terminal
// counts; the combinatorial core shared by the support builder.
struct DepthLayout {
  std::vector<std::vector<int>> nodes_at;  // observation indices per depth
  std::vector<int> required_terminals;     // T_d
  std::vector<std::vector<int>> forced;    // certainly-terminal indices
  std::vector<std::vector<int>> ambiguous; // single-label indices
};

DepthLayout layout_of(const LatentObservation& y, const LatentModel& model) {
  DepthLayout lay;
  int depths = static_cast<int>(y.C.size());
  lay.nodes_at.assign(static_cast<std::size_t>(depths), {});
  for (int i = 0; i < static_cast<int>(y.nodes.size()); ++i) {
    lay.nodes_at[static_cast<std::size_t>(y.nodes[static_cast<std::size_t>(i)].depth)].push_back(i);
  }
  lay.required_terminals.assign(static_cast<std::size_t>(depths), 0);
  lay.forced.assign(static_cast<std::size_t>(depths), {});
  lay.ambiguous.assign(static_cast<std::size_t>(depths), {});
  for (int d = 0; d < depths; ++d) {
    auto ud = static_cast<std::size_t>(d);
    long long next_c = d + 1 < depths ? y.C[ud + 1] : 0;
    if (next_c % model.b_eff != 0) {
      throw ConditioningError("latent_support: counts inconsistent with b_eff");
    }
    long long t = y.C[ud] - next_c / model.b_eff;
    if (t < 0 || t > y.C[ud]) {
      throw ConditioningError("latent_support: counts admit no flag assignment");
    }
    lay.required_terminals[ud] = static_cast<int>(t);
    for (int i : lay.nodes_at[ud]) {
      const auto& n = y.nodes[static_cast<std::size_t>(i)];
      if (n.labels.size() >= 2) {
        lay.forced[ud].push_back(i);
      } else {
        lay.ambiguous[ud].push_back(i);
      }
    }
    if (static_cast<int>(lay.forced[ud].size()) > lay.required_terminals[ud]) {
      throw ConditioningError("latent_support: more multi-step nodes than terminals");
    }
  }
  return lay;
}

void combinations(const std::vector<int>& items, int choose,
                  std::vector<std::vector<int>>& out) {
  std::vector<int> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (static_cast<int>(cur.size()) == choose) {
      out.push_back(cur);
      return;
    }
    for (std::size_t i = start; i < items.size(); ++i) {
      if (static_cast<int>(items.size() - i) < choose - static_cast<int>(cur.size())) break;
      cur.push_back(items[i]);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
}

}  // namespace

std::vector<LatentCompletion> latent_support(const LatentObservation& y,
                                             const LatentModel& model, long long cap) {
  DepthLayout lay = layout_of(y, model);
  int depths = static_cast<int>(y.C.size());
  // Per-depth choices of which ambiguous nodes are terminal.
  std::vector<std::vector<std::vector<int>>> per_depth(static_cast<std::size_t>(depths));
  long long total = 1;
  for (int d = 0; d < depths; ++d) {
    auto ud = static_cast<std::size_t>(d);
    int need = lay.required_terminals[ud] - static_cast<int>(lay.forced[ud].size());
    if (need < 0 || need > static_cast<int>(lay.ambiguous[ud].size())) {
      throw ConditioningError("latent_support: flag requirement infeasible at a depth");
    }
    combinations(lay.ambiguous[ud], need, per_depth[ud]);
    total *= static_cast<long long>(per_depth[ud].size());
    if (total > cap) throw ResourceError("latent_support: support exceeds cap");
  }
  std::vector<LatentCompletion> support;
  support.reserve(static_cast<std::size_t>(total));
  std::vector<std::size_t> pick(static_cast<std::size_t>(depths), 0);
  for (;;) {
    LatentCompletion z;
    z.terminal.assign(y.nodes.size(), 0);
    for (int d = 0; d < depths; ++d) {
      auto ud = static_cast<std::size_t>(d);
      for (int i : lay.forced[ud]) z.terminal[static_cast<std::size_t>(i)] = 1;
      for (int i : per_depth[ud][pick[ud]]) z.terminal[static_cast<std::size_t>(i)] = 1;
    }
    support.push_back(std::move(z));
    // Odometer increment over the per-depth choice lists.
    int d = depths - 1;
    while (d >= 0) {
      auto ud = static_cast<std::size_t>(d);
      if (++pick[ud] < per_depth[ud].size()) break;
      pick[ud] = 0;
      --d;
    }
    if (d < 0) break;
  }
  if (support.empty()) throw ConditioningError("latent_support: empty support");
  return support;
}

double completion_log_joint(const LatentObservation& y, const LatentCompletion& z,
                            const LatentModel& model) {
  if (z.terminal.size() != y.nodes.size()) {
    throw ContractError("completion_log_joint: completion/observation mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < y.nodes.size(); ++i) {
    const NodeObservation& n = y.nodes[i];
    bool term = z.terminal[i] != 0;
    if (n.depth < model.D) {
      double p = model.term_profile.at(static_cast<std::size_t>(n.depth));
      double flag = term ? p : 1.0 - p;
      if (flag <= 0.0) return kNegInf;
      acc += std::log(flag);
    } else if (!term) {
      return kNegInf;  // depth-D nodes are terminal by construction
    }
    if (term) {
      int len = static_cast<int>(n.labels.size());
      acc += model.length_log_prob(n.depth, len);
      for (int j = 0; j < len; ++j) {
        int cls = model.sol_cls(n.depth, len - j);
        if (cls < 0) return kNegInf;
        acc += std::log(model.label_probs.at(static_cast<std::size_t>(cls))
                            .at(static_cast<std::size_t>(n.labels[static_cast<std::size_t>(j)])));
      }
    } else {
      if (n.labels.size() != 1) return kNegInf;
      int cls = model.dec_cls(n.depth);
      if (cls < 0) return kNegInf;
      acc += std::log(model.label_probs.at(static_cast<std::size_t>(cls))
                          .at(static_cast<std::size_t>(n.labels[0])));
    }
  }
  return acc;
}

PosteriorFamily exact_posterior(const LatentObservation& y,
                                const std::vector<LatentCompletion>& support,
                                const LatentModel& model) {
  if (support.empty()) throw ConditioningError("exact_posterior: empty support");
  PosteriorFamily out;
  out.support = support;
  std::vector<double> logw(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    logw[i] = completion_log_joint(y, support[i], model);
  }
  double lse = log_sum_exp(logw);
  if (lse == kNegInf) {
    throw ConditioningError("exact_posterior: all completions carry zero probability");
  }
  out.weights.resize(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    out.weights[i] = std::exp(logw[i] - lse);
  }
  return out;
}

double log_evidence(const LatentObservation& y, const std::vector<LatentCompletion>& support,
                    const LatentModel& model) {
  std::vector<double> logw(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    logw[i] = completion_log_joint(y, support[i], model);
  }
  return log_sum_exp(logw);
}

double elbo(const LatentModel& model, const PosteriorFamily& r, const LatentObservation& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.support.size(); ++i) {
    double w = r.weights.at(i);
    if (w <= 0.0) continue;
    double lj = completion_log_joint(y, r.support[i], model);
    acc += w * (lj - std::log(w));
  }
  return acc;
}

PosteriorFamily mean_field_posterior(const LatentObservation& y,
                                     const std::vector<LatentCompletion>& support,
                                     const LatentModel& model, int sweeps) {
  // Ambiguous positions: nodes whose flag differs across the support.
  std::vector<std::size_t> free_pos;
  for (std::size_t i = 0; i < y.nodes.size(); ++i) {
    bool first = support.front().terminal[i] != 0;
    for (const LatentCompletion& z : support) {
      if ((z.terminal[i] != 0) != first) {
        free_pos.push_back(i);
        break;
      }
    }
  }
  std::vector<double> marg(free_pos.size(), 0.5);
  std::vector<double> logjoint(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    logjoint[i] = completion_log_joint(y, support[i], model);
  }
  auto family_weights = [&](const std::vector<double>& m) {
    std::vector<double> w(support.size());
    double total = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      double v = 1.0;
      for (std::size_t j = 0; j < free_pos.size(); ++j) {
        bool t = support[i].terminal[free_pos[j]] != 0;
        v *= t ? m[j] : 1.0 - m[j];
      }
      w[i] = v;
      total += v;
    }
    for (double& x : w) x /= total;
    return w;
  };
  auto family_elbo = [&](const std::vector<double>& m) {
    std::vector<double> w = family_weights(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] > 0.0) acc += w[i] * (logjoint[i] - std::log(w[i]));
    }
    return acc;
  };
  // Coordinate ascent by golden-section on each marginal.
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t j = 0; j < free_pos.size(); ++j) {
      double lo = 1e-4, hi = 1.0 - 1e-4;
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      auto eval = [&](double v) {
        std::vector<double> m = marg;
        m[j] = v;
        return family_elbo(m);
      };
      double f1 = eval(x1), f2 = eval(x2);
      for (int it = 0; it < 24; ++it) {
        if (f1 < f2) {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + gr * (hi - lo);
          f2 = eval(x2);
        } else {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - gr * (hi - lo);
          f1 = eval(x1);
        }
      }
      marg[j] = (lo + hi) / 2.0;
    }
  }
  PosteriorFamily out;
  out.support = support;
  out.weights = family_weights(marg);
  return out;
}

std::vector<std::pair<int, int>> completion_decisions(const LatentObservation& y,
                                                      const LatentCompletion& z,
                                                      const LatentModel& model) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < y.nodes.size(); ++i) {
    const NodeObservation& n = y.nodes[i];
    if (z.terminal[i]) {
      int len = static_cast<int>(n.labels.size());
      for (int j = 0; j < len; ++j) {
        out.emplace_back(model.sol_cls(n.depth, len - j), n.labels[static_cast<std::size_t>(j)]);
      }
    } else {
      out.emplace_back(model.dec_cls(n.depth), n.labels[0]);
    }
  }
  return out;
}

std::pair<TabularPolicy, TabularPolicy> posterior_weighted_erm(
    const std::vector<LatentObservation>& ys, const std::vector<PosteriorFamily>& posteriors,
    const LatentModel& model, double rho) {
  const ClassTable& classes = *model.classes;
  std::vector<std::vector<double>> counts(static_cast<std::size_t>(classes.size()));
  for (int c = 0; c < classes.size(); ++c) {
    counts[static_cast<std::size_t>(c)].assign(
        static_cast<std::size_t>(classes.at(c).num_candidates), 0.0);
  }
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const PosteriorFamily& r = posteriors.at(i);
    for (std::size_t k = 0; k < r.support.size(); ++k) {
      double w = r.weights[k];
      if (w <= 0.0) continue;
      for (auto [cls, a] : completion_decisions(ys[i], r.support[k], model)) {
        counts[static_cast<std::size_t>(cls)][static_cast<std::size_t>(a)] += w;
      }
    }
  }
  auto fit_type = [&](DecisionType typ) {
    TabularPolicy p;
    p.rho = rho;
    p.rows.resize(static_cast<std::size_t>(classes.size()));
    for (int c = 0; c < classes.size(); ++c) {
      const auto& cnt = counts[static_cast<std::size_t>(c)];
      if (classes.at(c).type == typ) {
        p.rows[static_cast<std::size_t>(c)] = floor_projected_mle(
            {cnt.data(), cnt.size()}, static_cast<int>(cnt.size()), rho);
      } else {
        p.rows[static_cast<std::size_t>(c)].assign(cnt.size(), 1.0 / static_cast<double>(cnt.size()));
      }
    }
    return p;
  };
  return {fit_type(DecisionType::Dec), fit_type(DecisionType::Sol)};
}

double postkl(const std::vector<PosteriorFamily>& phi,
              const std::vector<PosteriorFamily>& exact) {
  if (phi.size() != exact.size()) throw ContractError("postkl: family count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const auto& a = phi[i].weights;
    const auto& b = exact[i].weights;
    if (a.size() != b.size()) throw ContractError("postkl: support mismatch");
    double kl = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] > 0.0) {
        if (b[k] <= 0.0) return std::numeric_limits<double>::infinity();
        kl += a[k] * (std::log(a[k]) - std::log(b[k]));
      }
    }
    acc += kl;
  }
  return acc / static_cast<double>(phi.size());
}

double posterior_weighted_risk(const std::vector<LatentObservation>& ys,
                               const std::vector<PosteriorFamily>& posteriors,
                               const LatentModel& model, const PolicyFn& pi,
                               DecisionType typ) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const PosteriorFamily& r = posteriors.at(i);
    double inst = 0.0;
    for (std::size_t k = 0; k < r.support.size(); ++k) {
      double w = r.weights[k];
      if (w <= 0.0) continue;
      double loss = 0.0;
      int cnt = 0;
      for (auto [cls, a] : completion_decisions(ys[i], r.support[k], model)) {
        if (model.classes->at(cls).type != typ) continue;
        loss -= std::log(pi(cls)[static_cast<std::size_t>(a)]);
        cnt++;
      }
      inst += w * (loss / std::max(1, cnt));
    }
    acc += inst;
  }
  return acc / static_cast<double>(ys.size());
}

// ---- EM --------------------------------------------------------------------------

namespace {

// Posterior-expected statistics needed by the M-step, pooled across data.
struct MStats {
  // flag statistics per depth (interior depths only matter for the profile)
  std::vector<double> exp_terminals;  // E[T_d]
  std::vector<double> node_count;     // #nodes at depth d (observed)
  // solver-length statistics per depth
  std::vector<double> exp_term_count;   // E[# terminal nodes]
  std::vector<double> exp_term_length;  // E[sum of lengths]
};

MStats collect_mstats(const std::vector<LatentObservation>& data,
                      const std::vector<PosteriorFamily>& posteriors, int depths) {
  MStats st;
  st.exp_terminals.assign(static_cast<std::size_t>(depths), 0.0);
  st.node_count.assign(static_cast<std::size_t>(depths), 0.0);
  st.exp_term_count.assign(static_cast<std::size_t>(depths), 0.0);
  st.exp_term_length.assign(static_cast<std::size_t>(depths), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LatentObservation& y = data[i];
    for (const NodeObservation& n : y.nodes) {
      st.node_count[static_cast<std::size_t>(n.depth)] += 1.0;
    }
    const PosteriorFamily& r = posteriors[i];
    for (std::size_t k = 0; k < r.support.size(); ++k) {
      double w = r.weights[k];
      if (w <= 0.0) continue;
      const LatentCompletion& z = r.support[k];
      for (std::size_t j = 0; j < y.nodes.size(); ++j) {
        if (!z.terminal[j]) continue;
        auto d = static_cast<std::size_t>(y.nodes[j].depth);
        st.exp_terminals[d] += w;
        st.exp_term_count[d] += w;
        st.exp_term_length[d] += w * static_cast<double>(y.nodes[j].labels.size());
      }
    }
  }
  return st;
}

double length_objective(const MStats& st, double alpha, double K0) {
  double acc = 0.0;
  for (std::size_t d = 0; d < st.exp_term_count.size(); ++d) {
    double n = st.exp_term_count[d];
    if (n <= 0.0) continue;
    double s = st.exp_term_length[d];
    double mean = K0 * std::pow(alpha, static_cast<double>(d));
    if (mean <= 1.0) {
      // Degenerate all-ones law: impossible as soon as any expected length
      // exceeds the count.
      if (s > n + 1e-12) return kNegInf;
      continue;
    }
    double p = 1.0 / mean;
    acc += n * std::log(p) + (s - n) * std::log1p(-p);
  }
  return acc;
}

}  // namespace

EmState em_init(std::vector<LatentObservation> data, const LatentModel& init,
                bool exact_estep) {
  EmState st;
  st.model = init;
  st.data = std::move(data);
  st.exact_estep = exact_estep;
  st.supports.reserve(st.data.size());
  for (const LatentObservation& y : st.data) {
    st.supports.push_back(latent_support(y, st.model));
  }
  st.posteriors.resize(st.data.size());
  em_step(st);
  return st;
}

void em_step(EmState& st) {
  // E-step.
  for (std::size_t i = 0; i < st.data.size(); ++i) {
    st.posteriors[i] = st.exact_estep
                           ? exact_posterior(st.data[i], st.supports[i], st.model)
                           : mean_field_posterior(st.data[i], st.supports[i], st.model);
  }

  // M-step (generalized: each block only ever improves the expected
  // complete-data log-likelihood).
  int depths = 0;
  for (const LatentObservation& y : st.data) {
    depths = std::max(depths, static_cast<int>(y.C.size()));
  }
  MStats ms = collect_mstats(st.data, st.posteriors, depths);

  // Terminal profile: exact weighted Bernoulli MLE per interior depth.
  for (int d = 0; d < std::min(depths, st.model.D); ++d) {
    auto ud = static_cast<std::size_t>(d);
    if (ms.node_count[ud] > 0.0) {
      double p = ms.exp_terminals[ud] / ms.node_count[ud];
      st.model.term_profile[ud] = std::clamp(p, 1e-9, 1.0 - 1e-9);
    }
  }

  // (alpha, K0): accept-if-improved search seeded by a log-linear regression
  // of the expected mean lengths.
  {
    double best_a = st.model.alpha, best_k = st.model.K0;
    double best = length_objective(ms, best_a, best_k);
    // Regression proposal on log(mean length) vs depth.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int npts = 0;
    for (std::size_t d = 0; d < ms.exp_term_count.size(); ++d) {
      if (ms.exp_term_count[d] <= 0.0) continue;
      double mean = std::max(1.0 + 1e-9, ms.exp_term_length[d] / ms.exp_term_count[d]);
      double x = static_cast<double>(d), yv = std::log(mean);
      sx += x;
      sy += yv;
      sxx += x * x;
      sxy += x * yv;
      npts++;
    }
    if (npts >= 2 && sxx * npts - sx * sx > 1e-12) {
      double slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);
      double inter = (sy - slope * sx) / npts;
      double a = std::clamp(std::exp(slope), 1e-3, 1.0 - 1e-6);
      double k = std::clamp(std::exp(inter), 1e-3, 1e6);
      double v = length_objective(ms, a, k);
      if (v > best) {
        best = v;
        best_a = a;
        best_k = k;
      }
    }
    // Local multiplicative refinement around the incumbent.
    for (int round = 0; round < 12; ++round) {
      bool improved = false;
      for (double fa : {0.95, 1.0, 1.05}) {
        for (double fk : {0.95, 1.0, 1.05}) {
          double a = std::clamp(best_a * fa, 1e-3, 1.0 - 1e-6);
          double k = std::clamp(best_k * fk, 1e-3, 1e6);
          double v = length_objective(ms, a, k);
          if (v > best + 1e-12) {
            best = v;
            best_a = a;
            best_k = k;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
    st.model.alpha = best_a;
    st.model.K0 = best_k;
  }

  // Label conditionals: exact floored weighted MLE (shared with the policy step).
  auto [pdec, psol] = posterior_weighted_erm(st.data, st.posteriors, st.model, st.model.rho);
  for (int c = 0; c < st.model.classes->size(); ++c) {
    auto uc = static_cast<std::size_t>(c);
    st.model.label_probs[uc] = st.model.classes->at(c).type == DecisionType::Dec
                                   ? pdec.rows[uc]
                                   : psol.rows[uc];
  }
  st.policy_dec = std::move(pdec);
  st.policy_sol = std::move(psol);

  double total = 0.0;
  for (std::size_t i = 0; i < st.data.size(); ++i) {
    total += elbo(st.model, st.posteriors[i], st.data[i]);
  }
  st.empirical_elbo = total;
}

SuffStats expected_suff_stats(const LatentObservation& y, const PosteriorFamily& r) {
  SuffStats out;
  int depths = static_cast<int>(y.C.size());
  out.C.assign(static_cast<std::size_t>(depths), 0);
  out.T.assign(static_cast<std::size_t>(depths), 0);
  out.S.assign(static_cast<std::size_t>(depths), 0);
  out.Lbar.assign(static_cast<std::size_t>(depths), 0.0);
  for (int d = 0; d < depths; ++d) out.C[static_cast<std::size_t>(d)] = y.C[static_cast<std::size_t>(d)];
  // T and S are integer fields; expected values are wanted here, so keep the
  // rounded totals but compute Lbar exactly from the expectations.
  std::vector<double> t(static_cast<std::size_t>(depths), 0.0), s(static_cast<std::size_t>(depths), 0.0);
  for (std::size_t k = 0; k < r.support.size(); ++k) {
    double w = r.weights[k];
    if (w <= 0.0) continue;
    for (std::size_t j = 0; j < y.nodes.size(); ++j) {
      if (!r.support[k].terminal[j]) continue;
      auto d = static_cast<std::size_t>(y.nodes[j].depth);
      t[d] += w;
      s[d] += w * static_cast<double>(y.nodes[j].labels.size());
    }
  }
  for (int d = 0; d < depths; ++d) {
    auto ud = static_cast<std::size_t>(d);
    out.T[ud] = static_cast<long long>(std::llround(t[ud]));
    out.S[ud] = static_cast<long long>(std::llround(s[ud]));
    if (t[ud] > 0.0) out.Lbar[ud] = s[ud] / t[ud];
  }
  return out;
}

// ---- Moment estimators --------------------------------------------------------------

MomentEstimates::MomentEstimates()
    : b_eff_hat(kNaN),
      alpha_hat(kNaN),
      product_hat(kNaN),
      b_eff_hat_adjusted(kNaN),
      b_eff_reg(kNaN),
      alpha_reg(kNaN) {}

namespace {

double log_mean_ratio(const std::vector<double>& ratios) {
  if (ratios.empty()) return kNaN;
  double acc = 0.0;
  for (double r : ratios) acc += std::log(r);
  return std::exp(acc / static_cast<double>(ratios.size()));
}

double regression_slope_exp(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) return kNaN;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = static_cast<double>(pts.size());
  double den = n * sxx - sx * sx;
  if (std::abs(den) < 1e-12) return kNaN;
  return std::exp((n * sxy - sx * sy) / den);
}

}  // namespace

MomentEstimates estimate_structure(const std::vector<SuffStats>& stats) {
  MomentEstimates out;
  if (stats.empty()) return out;
  int depths = 0;
  for (const SuffStats& s : stats) depths = std::max(depths, s.depths());
  std::vector<double> C(static_cast<std::size_t>(depths), 0.0);
  std::vector<double> T(static_cast<std::size_t>(depths), 0.0);
  std::vector<double> S(static_cast<std::size_t>(depths), 0.0);
  std::vector<double> Lbar(static_cast<std::size_t>(depths), 0.0);
  std::vector<double> lbar_n(static_cast<std::size_t>(depths), 0.0);
  for (const SuffStats& s : stats) {
    for (int d = 0; d < s.depths(); ++d) {
      auto ud = static_cast<std::size_t>(d);
      C[ud] += static_cast<double>(s.C[ud]);
      T[ud] += static_cast<double>(s.T[ud]);
      S[ud] += static_cast<double>(s.S[ud]);
      if (s.T[ud] > 0) {
        Lbar[ud] += s.Lbar[ud];  // E[Lbar_d | T_d > 0]
        lbar_n[ud] += 1.0;
      }
    }
  }
  double n = static_cast<double>(stats.size());
  for (int d = 0; d < depths; ++d) {
    auto ud = static_cast<std::size_t>(d);
    C[ud] /= n;
    T[ud] /= n;
    S[ud] /= n;
    Lbar[ud] = lbar_n[ud] > 0.0 ? Lbar[ud] / lbar_n[ud] : 0.0;
  }

  std::vector<double> b_ratios, b_adj_ratios, a_ratios, p_ratios;
  std::vector<std::pair<double, double>> logC, logL;
  out.per_depth.resize(static_cast<std::size_t>(depths));
  for (int d = 0; d < depths; ++d) {
    auto ud = static_cast<std::size_t>(d);
    DepthDiagnostic& diag = out.per_depth[ud];
    diag.depth = d;
    diag.C = C[ud];
    diag.T = T[ud];
    diag.S = S[ud];
    diag.Lbar = Lbar[ud];
    if (C[ud] > 0.0) logC.emplace_back(static_cast<double>(d), std::log(C[ud]));
    if (Lbar[ud] > 0.0) logL.emplace_back(static_cast<double>(d), std::log(Lbar[ud]));
    if (d + 1 < depths) {
      if (C[ud] > 0.0 && C[ud + 1] > 0.0) {
        diag.b_ratio = C[ud + 1] / C[ud];
        diag.b_usable = true;
        b_ratios.push_back(diag.b_ratio);
        double open_nodes = C[ud] - T[ud];
        if (open_nodes > 0.0) b_adj_ratios.push_back(C[ud + 1] / open_nodes);
      }
      if (Lbar[ud] > 0.0 && Lbar[ud + 1] > 0.0) {
        diag.alpha_ratio = Lbar[ud + 1] / Lbar[ud];
        diag.alpha_usable = true;
        a_ratios.push_back(diag.alpha_ratio);
      }
      if (S[ud] > 0.0 && S[ud + 1] > 0.0) {
        diag.product_ratio = S[ud + 1] / S[ud];
        diag.product_usable = true;
        p_ratios.push_back(diag.product_ratio);
      }
    }
  }
  out.b_eff_hat = log_mean_ratio(b_ratios);
  out.b_eff_hat_adjusted = log_mean_ratio(b_adj_ratios);
  out.alpha_hat = log_mean_ratio(a_ratios);
  out.product_hat = log_mean_ratio(p_ratios);
  out.b_eff_reg = regression_slope_exp(logC);
  out.alpha_reg = regression_slope_exp(logL);
  out.individual_recoverable = !b_ratios.empty() || !a_ratios.empty();
  return out;
}

MomentEstimates estimate_structure_aggregated(const std::vector<std::vector<double>>& s_only) {
  MomentEstimates out;
  out.aggregated_only = true;
  out.individual_recoverable = false;
  if (s_only.empty()) return out;
  std::size_t depths = 0;
  for (const auto& s : s_only) depths = std::max(depths, s.size());
  std::vector<double> S(depths, 0.0);
  for (const auto& s : s_only) {
    for (std::size_t d = 0; d < s.size(); ++d) S[d] += s[d];
  }
  for (double& x : S) x /= static_cast<double>(s_only.size());
  std::vector<double> ratios;
  out.per_depth.resize(depths);
  for (std::size_t d = 0; d < depths; ++d) {
    out.per_depth[d].depth = static_cast<int>(d);
    out.per_depth[d].S = S[d];
    if (d + 1 < depths && S[d] > 0.0 && S[d + 1] > 0.0) {
      out.per_depth[d].product_ratio = S[d + 1] / S[d];
      out.per_depth[d].product_usable = true;
      ratios.push_back(out.per_depth[d].product_ratio);
    }
  }
  out.product_hat = log_mean_ratio(ratios);
  return out;
}

}  // namespace prooflab
