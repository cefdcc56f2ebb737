#include "prooflab/bl_metric.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace prooflab {

void FiniteMetric::validate() const {
  if (static_cast<int>(d.size()) != n * n) throw ContractError("FiniteMetric: table size");
  for (int i = 0; i < n; ++i) {
    if (std::abs(at(i, i)) > 1e-12) throw ContractError("FiniteMetric: nonzero diagonal");
    for (int j = 0; j < n; ++j) {
      if (at(i, j) < 0.0) throw ContractError("FiniteMetric: negative distance");
      if (std::abs(at(i, j) - at(j, i)) > 1e-12) throw ContractError("FiniteMetric: asymmetric");
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        if (at(i, j) > at(i, k) + at(k, j) + 1e-9) {
          throw ContractError("FiniteMetric: triangle inequality violated");
        }
      }
    }
  }
}

double DiscreteMeasure::total() const {
  double t = 0.0;
  for (double m : mass) t += m;
  return t;
}

namespace {

constexpr int kMaxSupport = 64;
constexpr double kTol = 1e-11;

// Dual LP in standard form: min cost^T y, A y = c, y >= 0, where the rows of
// A are the support points. Columns, in Bland order:
//   u_i (id i)            : +e_i, cost 1      (multiplier of f_i <= 1)
//   v_i (id n+i)          : -e_i, cost 1      (multiplier of -f_i <= 1)
//   g_{ij} (pairs, i!=j)  : e_i - e_j, cost d_ij   (f_i - f_j <= d_ij)
// The simplex multipliers at optimality are the primal test function f.
struct DualLp {
  int n;
  const std::vector<double>* dist;  // row-major n*n on the union support
  std::vector<std::pair<int, int>> pairs;

  int num_cols() const { return 2 * n + static_cast<int>(pairs.size()); }

  double cost(int col) const {
    if (col < 2 * n) return 1.0;
    auto [i, j] = pairs[static_cast<std::size_t>(col - 2 * n)];
    return (*dist)[static_cast<std::size_t>(i) * n + j];
  }

  // a(col) has at most two nonzeros; report them as (row, value).
  int entries(int col, int rows[2], double vals[2]) const {
    if (col < n) {
      rows[0] = col;
      vals[0] = 1.0;
      return 1;
    }
    if (col < 2 * n) {
      rows[0] = col - n;
      vals[0] = -1.0;
      return 1;
    }
    auto [i, j] = pairs[static_cast<std::size_t>(col - 2 * n)];
    rows[0] = i;
    vals[0] = 1.0;
    rows[1] = j;
    vals[1] = -1.0;
    return 2;
  }
};

}  // namespace

BlResult d_bl_certified(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const FiniteMetric& metric) {
  metric.validate();
  // Union support with signed masses c = mu - nu.
  std::map<int, double> c_map;
  for (std::size_t i = 0; i < mu.points.size(); ++i) {
    if (mu.mass[i] < 0.0) throw ContractError("d_bl: negative mass");
    c_map[mu.points[i]] += mu.mass[i];
  }
  for (std::size_t i = 0; i < nu.points.size(); ++i) {
    if (nu.mass[i] < 0.0) throw ContractError("d_bl: negative mass");
    c_map[nu.points[i]] -= nu.mass[i];
  }
  BlResult res;
  if (c_map.empty()) return res;
  if (static_cast<int>(c_map.size()) > kMaxSupport) {
    throw ResourceError("d_bl: union support exceeds 64 points");
  }
  const int n = static_cast<int>(c_map.size());
  std::vector<int> support;
  std::vector<double> c;
  for (auto [pt, m] : c_map) {
    if (pt < 0 || pt >= metric.n) throw ContractError("d_bl: point outside the metric space");
    support.push_back(pt);
    c.push_back(m);
  }
  std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      dist[static_cast<std::size_t>(i) * n + j] = metric.at(support[static_cast<std::size_t>(i)],
                                                            support[static_cast<std::size_t>(j)]);
    }
  }

  DualLp lp;
  lp.n = n;
  lp.dist = &dist;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) lp.pairs.emplace_back(i, j);
    }
  }

  // Start from the all-slack basis u_i / v_i depending on the sign of c_i.
  std::vector<int> basis(static_cast<std::size_t>(n));
  std::vector<double> xb(static_cast<std::size_t>(n));
  std::vector<double> binv(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    basis[static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)] >= 0.0 ? i : n + i;
    xb[static_cast<std::size_t>(i)] = std::abs(c[static_cast<std::size_t>(i)]);
    binv[static_cast<std::size_t>(i) * n + i] = c[static_cast<std::size_t>(i)] >= 0.0 ? 1.0 : -1.0;
  }

  std::vector<double> lambda(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  const int max_iter = 200000;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    // lambda = cost_B^T B^{-1}
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += lp.cost(basis[static_cast<std::size_t>(i)]) * binv[static_cast<std::size_t>(i) * n + j];
      }
      lambda[static_cast<std::size_t>(j)] = acc;
    }
    // Entering column: Bland (lowest id with negative reduced cost).
    int enter = -1;
    int rows2[2];
    double vals2[2];
    for (int col = 0; col < lp.num_cols(); ++col) {
      int m = lp.entries(col, rows2, vals2);
      double rc = lp.cost(col);
      for (int e = 0; e < m; ++e) rc -= lambda[static_cast<std::size_t>(rows2[e])] * vals2[e];
      if (rc < -kTol) {
        enter = col;
        break;
      }
    }
    if (enter < 0) break;  // optimal
    // w = B^{-1} a_enter
    int m = lp.entries(enter, rows2, vals2);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int e = 0; e < m; ++e) {
        acc += binv[static_cast<std::size_t>(i) * n + rows2[e]] * vals2[e];
      }
      w[static_cast<std::size_t>(i)] = acc;
    }
    // Ratio test (Bland: among the argmins, smallest basis column id).
    int leave = -1;
    double theta = 0.0;
    for (int i = 0; i < n; ++i) {
      if (w[static_cast<std::size_t>(i)] > kTol) {
        double ratio = xb[static_cast<std::size_t>(i)] / w[static_cast<std::size_t>(i)];
        if (leave < 0 || ratio < theta - kTol ||
            (ratio < theta + kTol &&
             basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          leave = i;
          theta = ratio;
        }
      }
    }
    if (leave < 0) throw ResourceError("d_bl: dual unbounded (inconsistent input)");
    // Pivot.
    for (int i = 0; i < n; ++i) {
      if (i != leave) xb[static_cast<std::size_t>(i)] -= theta * w[static_cast<std::size_t>(i)];
    }
    xb[static_cast<std::size_t>(leave)] = theta;
    double piv = w[static_cast<std::size_t>(leave)];
    for (int j = 0; j < n; ++j) binv[static_cast<std::size_t>(leave) * n + j] /= piv;
    for (int i = 0; i < n; ++i) {
      if (i == leave) continue;
      double factor = w[static_cast<std::size_t>(i)];
      if (factor == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        binv[static_cast<std::size_t>(i) * n + j] -=
            factor * binv[static_cast<std::size_t>(leave) * n + j];
      }
    }
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  if (iter >= max_iter) throw ResourceError("d_bl: simplex iteration cap exceeded");

  // Primal solution = simplex multipliers; dual objective certifies it.
  double dual_obj = 0.0;
  for (int i = 0; i < n; ++i) {
    dual_obj += lp.cost(basis[static_cast<std::size_t>(i)]) * xb[static_cast<std::size_t>(i)];
  }
  double primal_obj = 0.0;
  for (int i = 0; i < n; ++i) primal_obj += c[static_cast<std::size_t>(i)] * lambda[static_cast<std::size_t>(i)];

  res.value = dual_obj;
  res.f = lambda;
  res.support = support;
  res.duality_gap = std::abs(dual_obj - primal_obj);
  res.iterations = iter;
  return res;
}

double d_bl(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const FiniteMetric& metric) {
  return d_bl_certified(mu, nu, metric).value;
}

DiscreteMeasure goal_embed(const std::vector<GoalToken>& goals,
                           const std::function<int(const GoalToken&)>& embedding) {
  std::map<int, double> acc;
  for (const GoalToken& g : goals) acc[embedding(g)] += 1.0;
  DiscreteMeasure m;
  for (auto [pt, mass] : acc) {
    m.points.push_back(pt);
    m.mass.push_back(mass);
  }
  return m;
}

FiniteMetric random_metric(int n, Rng& rng, double scale) {
  FiniteMetric m;
  m.n = n;
  m.d.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double v = rng.uniform(0.05, scale);
      m.d[static_cast<std::size_t>(i) * n + j] = v;
      m.d[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  // Floyd-Warshall closure makes the table a genuine metric.
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double via = m.at(i, k) + m.at(k, j);
        if (via < m.at(i, j)) m.d[static_cast<std::size_t>(i) * n + j] = via;
      }
    }
  }
  return m;
}

}  // namespace prooflab
