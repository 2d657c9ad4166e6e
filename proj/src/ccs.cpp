#include "rgfm/ccs.hpp"

#include <cmath>
#include <fmt/format.h>

#include "rgfm/trig.hpp"

namespace rgfm {

namespace {

void require_same_size(const Vec& x, const Vec& y, const SpaceSpec& spec) {
  if (x.size() != spec.ambient_dim() || y.size() != spec.ambient_dim()) {
    throw DimensionError(fmt::format("expected vectors of length {}, got {} and {}",
                                     spec.ambient_dim(), x.size(), y.size()));
  }
}

// Residuals of large hyperboloid points carry round-off proportional to
// |x|^2, so tolerances scale with the squared norm once it exceeds 1/|kappa|.
double scaled_tol(double tol, const Vec& x, const SpaceSpec& spec) {
  const double scale = spec.euclidean() ? 1.0 : x.squaredNorm() * std::abs(spec.curvature());
  return tol * std::max(1.0, scale);
}

Vec euclidean_vec(const Vec& v) {
  Vec out = v;
  out[0] = 0.0;
  return out;
}

struct GeodesicAngle {
  double theta;  // sqrt|kappa| * distance
  double sin_theta;
  Vec direction;  // y - beta x, tangent at x with kappa-norm sin_theta / sqrt|kappa|
};

// Angle between x and y computed from the tangential residual instead of
// acos(beta) alone, which loses half the significant digits near beta = 1.
GeodesicAngle geodesic_angle(const Vec& x, const Vec& y, const SpaceSpec& spec) {
  const double kappa = spec.curvature();
  const double beta = kappa * curvature_inner(x, y, spec);
  Vec w = y - beta * x;
  const double n = spec.sqrt_abs_curvature() * std::sqrt(std::abs(curvature_inner(w, w, spec)));
  double theta;
  if (spec.spherical()) {
    theta = std::atan2(n, beta);
  } else if (beta > 2.0) {
    theta = std::acosh(beta);
  } else {
    theta = std::asinh(n);
  }
  return {theta, n, std::move(w)};
}

}  // namespace

SpaceSpec::SpaceSpec(int dim, double curvature) : dim_(dim), curvature_(curvature) {
  if (dim < 1) throw ArgumentError(fmt::format("space dimension must be >= 1, got {}", dim));
  if (!std::isfinite(curvature)) throw ArgumentError("curvature must be finite");
}

double SpaceSpec::sqrt_abs_curvature() const { return std::sqrt(std::abs(curvature_)); }

CurvedPoint CurvedPoint::on(const SpaceSpec& spec, Vec coords) {
  if (coords.size() != spec.ambient_dim()) {
    throw DimensionError(fmt::format("point of length {} in a space of ambient dimension {}",
                                     coords.size(), spec.ambient_dim()));
  }
  if (spec.euclidean()) {
    if (coords[0] != 0.0) throw ManifoldError("Euclidean-mode points have time component 0");
    return CurvedPoint(std::move(coords));
  }
  const double residual = manifold_residual(coords, spec);
  if (residual > scaled_tol(kManifoldTol, coords, spec)) {
    throw ManifoldError(fmt::format("point off the manifold (residual {:.3e})", residual));
  }
  if (spec.hyperbolic() && coords[0] <= 0.0) {
    throw ManifoldError("hyperboloid points need a positive time component");
  }
  return CurvedPoint(std::move(coords));
}

TangentVector TangentVector::at(const SpaceSpec& spec, CurvedPoint base, Vec vec) {
  if (vec.size() != base.size()) {
    throw DimensionError(fmt::format("tangent vector of length {} at a point of length {}",
                                     vec.size(), base.size()));
  }
  const double residual = tangency_residual(base.coords(), vec, spec);
  if (residual > kTangentTol) {
    throw TangencyError(fmt::format("vector not tangent at base (residual {:.3e})", residual));
  }
  return TangentVector(std::move(base), std::move(vec));
}

double curvature_inner(const Vec& x, const Vec& y, const SpaceSpec& spec) {
  require_same_size(x, y, spec);
  const auto n = x.size() - 1;
  return spec.sign() * x[0] * y[0] + x.tail(n).dot(y.tail(n));
}

double manifold_residual(const Vec& x, const SpaceSpec& spec) {
  if (spec.euclidean()) return std::abs(x[0]);
  return std::abs(curvature_inner(x, x, spec) - 1.0 / spec.curvature());
}

double tangency_residual(const Vec& x, const Vec& v, const SpaceSpec& spec) {
  if (spec.euclidean()) return std::abs(v[0]);
  return std::abs(curvature_inner(v, x, spec));
}

CurvedPoint north_pole(const SpaceSpec& spec) {
  Vec o = Vec::Zero(spec.ambient_dim());
  if (!spec.euclidean()) o[0] = 1.0 / spec.sqrt_abs_curvature();
  return CurvedPoint::unchecked(std::move(o));
}

CurvedPoint exp_map(const CurvedPoint& x, const TangentVector& v, const SpaceSpec& spec) {
  require_same_size(x.coords(), v.vec(), spec);
  const double residual = tangency_residual(x.coords(), v.vec(), spec);
  if (residual > kTangentTol) {
    throw TangencyError(fmt::format("exp_map: vector not tangent (residual {:.3e})", residual));
  }
  if (spec.euclidean()) return CurvedPoint::unchecked(x.coords() + euclidean_vec(v.vec()));

  const double norm = std::sqrt(std::max(0.0, curvature_inner(v.vec(), v.vec(), spec)));
  if (norm <= kZeroTol) return x;
  const double kappa = spec.curvature();
  const double theta = spec.sqrt_abs_curvature() * norm;
  if (spec.spherical() && theta >= M_PI) {
    throw InjectivityError(
        fmt::format("exp_map: sqrt(kappa)*|v| = {:.6f} reaches the injectivity radius pi", theta));
  }
  return CurvedPoint::unchecked(cos_k(theta, kappa) * x.coords() +
                                (sin_k(theta, kappa) / theta) * v.vec());
}

TangentVector log_map(const CurvedPoint& x, const CurvedPoint& y, const SpaceSpec& spec) {
  require_same_size(x.coords(), y.coords(), spec);
  if (spec.euclidean()) return TangentVector::unchecked(x, euclidean_vec(y.coords() - x.coords()));

  if (spec.spherical()) {
    const double beta = spec.curvature() * curvature_inner(x.coords(), y.coords(), spec);
    if (1.0 + beta <= 1e-10) throw DegeneratePairError("log_map: antipodal points on the sphere");
  }
  auto [theta, sin_theta, direction] = geodesic_angle(x.coords(), y.coords(), spec);
  const double coef = sin_theta > kZeroTol ? theta / sin_theta : 1.0;
  return TangentVector::unchecked(x, coef * direction);
}

TangentVector parallel_transport(const CurvedPoint& src, const CurvedPoint& dst,
                                 const TangentVector& v, const SpaceSpec& spec) {
  require_same_size(src.coords(), dst.coords(), spec);
  const double residual = tangency_residual(src.coords(), v.vec(), spec);
  if (residual > kTangentTol) {
    throw TangencyError(
        fmt::format("parallel_transport: vector not tangent at source (residual {:.3e})", residual));
  }
  if (spec.euclidean()) return TangentVector::unchecked(dst, euclidean_vec(v.vec()));

  const double kappa = spec.curvature();
  const double denom = 1.0 + kappa * curvature_inner(src.coords(), dst.coords(), spec);
  if (denom <= kZeroTol) throw DegeneratePairError("parallel_transport: antipodal endpoints");
  const double coef = kappa * curvature_inner(v.vec(), dst.coords(), spec) / denom;
  return TangentVector::unchecked(dst, v.vec() - coef * (src.coords() + dst.coords()));
}

double geodesic_distance(const CurvedPoint& x, const CurvedPoint& y, const SpaceSpec& spec) {
  require_same_size(x.coords(), y.coords(), spec);
  if (spec.euclidean()) return (x.coords() - y.coords()).tail(spec.dim()).norm();
  return geodesic_angle(x.coords(), y.coords(), spec).theta / spec.sqrt_abs_curvature();
}

double ambient_sq_distance(const CurvedPoint& x, const CurvedPoint& y, const SpaceSpec& spec) {
  if (spec.euclidean()) {
    throw UnsupportedModeError("ambient squared distance needs kappa != 0; use |x - y|^2");
  }
  return 2.0 / spec.curvature() - 2.0 * curvature_inner(x.coords(), y.coords(), spec);
}

TangentVector project_to_tangent(const CurvedPoint& x, const Vec& w, const SpaceSpec& spec) {
  require_same_size(x.coords(), w, spec);
  if (spec.euclidean()) return TangentVector::unchecked(x, euclidean_vec(w));
  const double coef = spec.curvature() * curvature_inner(w, x.coords(), spec);
  return TangentVector::unchecked(x, w - coef * x.coords());
}

}  // namespace rgfm
