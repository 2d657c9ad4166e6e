#pragma once

#include <algorithm>
#include <cmath>
#include <Eigen/Core>

namespace rgfm {

// Margin kept away from the edge of the inverse-cosine domain when
// differentiating; values themselves are clamped to the closed domain.
inline constexpr double kClampMargin = 1e-12;

/// Elementwise tanh through exp, which Eigen vectorizes for doubles.
template <typename Derived>
auto tanh_array(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

/// cos for positive curvature, cosh for negative.
inline double cos_k(double t, double kappa) {
  return kappa > 0 ? std::cos(t) : std::cosh(t);
}

/// sin for positive curvature, sinh for negative.
inline double sin_k(double t, double kappa) {
  return kappa > 0 ? std::sin(t) : std::sinh(t);
}

/// Inverse of cos_k. Arguments that round-off pushed outside the analytic
/// domain are clamped to it ([-1, 1] on the sphere, [1, inf) otherwise).
inline double acos_k(double t, double kappa) {
  if (kappa > 0) return std::acos(std::clamp(t, -1.0, 1.0));
  return std::acosh(std::max(t, 1.0));
}

/// Derivative of acos_k. Zero inside the clamp margin so no non-finite
/// values leak through the domain guard.
inline double acos_k_derivative(double t, double kappa) {
  if (kappa > 0) {
    if (t <= -1.0 + kClampMargin || t >= 1.0 - kClampMargin) return 0.0;
    return -1.0 / std::sqrt(1.0 - t * t);
  }
  if (t <= 1.0 + kClampMargin) return 0.0;
  return 1.0 / std::sqrt(t * t - 1.0);
}

/// d/dt cos_k(t): -sin on the sphere, sinh on the hyperboloid.
inline double cos_k_derivative(double t, double kappa) {
  return kappa > 0 ? -std::sin(t) : std::sinh(t);
}

}  // namespace rgfm
