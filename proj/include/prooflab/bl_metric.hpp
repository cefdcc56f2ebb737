#pragma once

#include <functional>
#include <vector>

#include "prooflab/mdp.hpp"

namespace prooflab {

// Finite metric space: point ids 0..n-1 with a dense distance table.
struct FiniteMetric {
  int n = 0;
  std::vector<double> d;  // row-major n*n

  double at(int i, int j) const { return d.at(static_cast<std::size_t>(i) * n + j); }
  // Symmetry, zero diagonal, triangle inequality (tolerance 1e-9). Throws.
  void validate() const;
};

// Nonnegative measure with finite support in a FiniteMetric.
struct DiscreteMeasure {
  std::vector<int> points;
  std::vector<double> mass;

  double total() const;
};

struct BlResult {
  double value = 0.0;
  std::vector<double> f;        // optimal test function on the union support
  std::vector<int> support;     // point ids the entries of f refer to
  double duality_gap = 0.0;
  int iterations = 0;
};

// Bounded-Lipschitz distance: the exact optimum of
//   max sum_i (mu_i - nu_i) f_i   s.t. |f_i| <= 1, |f_i - f_j| <= d(x_i, x_j),
// solved by a revised simplex on the dual with a duality-gap certificate.
// Union supports are capped at 64 points.
BlResult d_bl_certified(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const FiniteMetric& metric);

double d_bl(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const FiniteMetric& metric);

// Goal measure of a prover state: one unit dirac per open goal under the
// given embedding. The solved state maps to the zero measure.
DiscreteMeasure goal_embed(const std::vector<GoalToken>& goals,
                           const std::function<int(const GoalToken&)>& embedding);

// Shortest-path closure of a random symmetric weight table: a valid metric
// for the randomized axiom tests.
FiniteMetric random_metric(int n, Rng& rng, double scale = 2.0);

}  // namespace prooflab
