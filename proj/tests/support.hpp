#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rgfm/ccs.hpp"
#include "rgfm/graph.hpp"
#include "rgfm/riemann_ops.hpp"
#include "rgfm/rng.hpp"

namespace rgfm::test {

inline Graph make_graph(int n, std::vector<Edge> edges) { return Graph::from_edges(n, edges); }

inline Graph triangle() { return make_graph(3, {{0, 1}, {1, 2}, {0, 2}}); }

inline Graph path(int n) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return make_graph(n, e);
}

// Triangle 0-1-2 with a square 2-3-4-5 hanging off node 2.
inline Graph toy6() { return make_graph(6, {{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 2}}); }

inline Vec gaussian(int n, Engine& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * standard_normal(rng);
  return v;
}

// Random point: exp of a random tangent vector at the pole, kept inside the
// injectivity radius on the sphere.
inline Vec random_point(const SpaceSpec& spec, Engine& rng, double scale = 1.0) {
  Vec v = Vec::Zero(spec.ambient_dim());
  v.tail(spec.dim()) = gaussian(spec.dim(), rng, scale);
  if (spec.euclidean()) return v;
  const double r = spec.sqrt_abs_curvature();
  if (spec.spherical() && r * v.norm() > 2.5) v *= 2.5 / (r * v.norm());
  const double theta = r * v.norm();
  Vec x = Vec::Zero(spec.ambient_dim());
  const double cos_part = spec.spherical() ? std::cos(theta) : std::cosh(theta);
  const double sin_part = theta == 0 ? 1.0 : (spec.spherical() ? std::sin(theta) : std::sinh(theta)) / theta;
  x[0] = cos_part / r;
  x.tail(spec.dim()) = sin_part * v.tail(spec.dim());
  return x;
}

// Random tangent vector at x: a Gaussian projected onto the tangent space.
inline Vec random_tangent(const SpaceSpec& spec, const Vec& x, Engine& rng, double scale = 1.0) {
  Vec w = gaussian(spec.ambient_dim(), rng, scale);
  if (spec.euclidean()) {
    w[0] = 0.0;
    return w;
  }
  const double k = spec.curvature();
  const double inner = spec.sign() * w[0] * x[0] + w.tail(spec.dim()).dot(x.tail(spec.dim()));
  return w - k * inner * x;
}

inline Mat random_matrix(int rows, int cols, Engine& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = scale * standard_normal(rng);
  }
  return m;
}

inline double midpoint_objective(const Vec& c, std::span<const WeightedPoint> points, const SpaceSpec& spec) {
  double f = 0.0;
  for (const auto& p : points) {
    f += p.weight * ambient_sq_distance(CurvedPoint::unchecked(c), p.point, spec);
  }
  return f;
}

// Projected gradient descent with exp retraction, step 1e-2, 10^4
// iterations, restarted from every input point; the best end point wins.
inline Vec descent_oracle(std::span<const WeightedPoint> points, const SpaceSpec& spec) {
  Vec best;
  double best_f = INFINITY;
  for (const auto& start : points) {
    CurvedPoint c = start.point;
    for (int it = 0; it < 10000; ++it) {
      Vec g = Vec::Zero(spec.ambient_dim());
      // Metric gradient of sum_i w_i (2/kappa - 2 <c, x_i>).
      for (const auto& p : points) g -= 2.0 * p.weight * p.point.coords();
      const TangentVector rg = project_to_tangent(c, g, spec);
      c = exp_map(c, TangentVector::unchecked(c, -1e-2 * rg.vec()), spec);
      const double norm = std::sqrt(std::abs(spec.curvature() * curvature_inner(c.coords(), c.coords(), spec)));
      c = CurvedPoint::unchecked(c.coords() / norm);
    }
    const double f = midpoint_objective(c.coords(), points, spec);
    if (f < best_f) {
      best_f = f;
      best = c.coords();
    }
  }
  return best;
}

}  // namespace rgfm::test
