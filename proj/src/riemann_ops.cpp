#include "rgfm/riemann_ops.hpp"

#include <cmath>
#include <fmt/format.h>

namespace rgfm {

CurvedPoint manifold_linear(const CurvedPoint& x, const LinearMapParams& params,
                            const SpaceSpec& spec_out) {
  const Mat& w = params.weight;
  if (w.rows() != spec_out.dim() || w.cols() != x.size() - 1) {
    throw DimensionError(fmt::format("linear map of shape {}x{} cannot take a point of length {} to "
                                     "dimension {}",
                                     w.rows(), w.cols(), x.size(), spec_out.dim()));
  }
  Vec out(spec_out.ambient_dim());
  const Vec wx = w * x.space();
  if (spec_out.euclidean()) {
    out[0] = 0.0;
    out.tail(spec_out.dim()) = wx;
    return CurvedPoint::unchecked(std::move(out));
  }

  const double kappa = spec_out.curvature();
  const double t = x.time();
  const double target = std::sqrt(std::max(0.0, 1.0 / kappa - spec_out.sign() * t * t));
  out[0] = t;
  if (target == 0.0) {
    // x sits at a pole (x_s = 0); the only point with this time value.
    out.tail(spec_out.dim()).setZero();
    return CurvedPoint::unchecked(std::move(out));
  }
  const double norm = wx.norm();
  if (norm <= kZeroTol) {
    throw DegenerateDirectionError(
        fmt::format("manifold_linear: |W x_s| = {:.3e} leaves no direction to rescale", norm));
  }
  out.tail(spec_out.dim()) = (target / norm) * wx;
  return CurvedPoint::unchecked(std::move(out));
}

CurvedPoint geometric_midpoint(std::span<const WeightedPoint> points, const SpaceSpec& spec) {
  if (points.empty()) throw ArgumentError("geometric_midpoint: empty point set");
  Vec sum = Vec::Zero(spec.ambient_dim());
  double total = 0.0;
  for (const auto& [point, weight] : points) {
    if (point.size() != spec.ambient_dim()) {
      throw DimensionError(fmt::format("midpoint input of length {} in ambient dimension {}",
                                       point.size(), spec.ambient_dim()));
    }
    if (!(weight >= 0.0)) throw ArgumentError("geometric_midpoint: weights must be nonnegative");
    sum += weight * point.coords();
    total += weight;
  }
  if (spec.euclidean()) {
    if (total <= kZeroTol) throw DegenerateMidpointError("geometric_midpoint: zero total weight");
    return CurvedPoint::unchecked(sum / total);
  }

  const double sq = curvature_inner(sum, sum, spec);
  if (std::abs(sq) <= kZeroTol) {
    throw DegenerateMidpointError(
        fmt::format("geometric_midpoint: weighted sum has kappa-norm {:.3e}", sq));
  }
  Vec mid = sum / (spec.sqrt_abs_curvature() * std::sqrt(std::abs(sq)));
  if (spec.hyperbolic() && mid[0] < 0.0) mid = -mid;
  return CurvedPoint::unchecked(std::move(mid));
}

}  // namespace rgfm
