#pragma once

// Constant-curvature spaces in the unified Lorentz/Spherical model.
//
// A point of the d-dimensional space with curvature kappa != 0 is a vector
// x = [x_t; x_s] in R^{d+1} with <x, x>_kappa = 1/kappa, where
//   <x, y>_kappa = sgn(kappa) x_t y_t + x_s^T y_s.
// kappa < 0 gives the hyperboloid (x_t > 0), kappa > 0 the sphere of radius
// 1/sqrt(kappa). kappa = 0 is a Euclidean mode kept for geometric ablations:
// the time slot is pinned to zero and every map degenerates to vector
// arithmetic.

#include <Eigen/Dense>

#include "rgfm/errors.hpp"

namespace rgfm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kManifoldTol = 1e-9;
inline constexpr double kTangentTol = 1e-8;
inline constexpr double kZeroTol = 1e-12;

class SpaceSpec {
 public:
  SpaceSpec(int dim, double curvature);

  int dim() const { return dim_; }
  int ambient_dim() const { return dim_ + 1; }
  double curvature() const { return curvature_; }

  bool euclidean() const { return curvature_ == 0.0; }
  bool hyperbolic() const { return curvature_ < 0.0; }
  bool spherical() const { return curvature_ > 0.0; }

  // sgn(kappa); zero in Euclidean mode so the time slot drops out.
  double sign() const { return curvature_ > 0 ? 1.0 : (curvature_ < 0 ? -1.0 : 0.0); }
  double sqrt_abs_curvature() const;

  bool operator==(const SpaceSpec&) const = default;

 private:
  int dim_;
  double curvature_;
};

class CurvedPoint {
 public:
  /// Validates the quadric constraint (and x_t > 0 on the hyperboloid).
  static CurvedPoint on(const SpaceSpec& spec, Vec coords);
  /// Skips validation; for coordinates produced by the library's own maps.
  static CurvedPoint unchecked(Vec coords) { return CurvedPoint(std::move(coords)); }

  const Vec& coords() const { return coords_; }
  double time() const { return coords_[0]; }
  auto space() const { return coords_.tail(coords_.size() - 1); }
  Eigen::Index size() const { return coords_.size(); }

 private:
  explicit CurvedPoint(Vec coords) : coords_(std::move(coords)) {}
  Vec coords_;
};

class TangentVector {
 public:
  /// Validates tangency of vec at base.
  static TangentVector at(const SpaceSpec& spec, CurvedPoint base, Vec vec);
  static TangentVector unchecked(CurvedPoint base, Vec vec) {
    return TangentVector(std::move(base), std::move(vec));
  }

  const CurvedPoint& base() const { return base_; }
  const Vec& vec() const { return vec_; }

 private:
  TangentVector(CurvedPoint base, Vec vec) : base_(std::move(base)), vec_(std::move(vec)) {}
  CurvedPoint base_;
  Vec vec_;
};

/// sgn(kappa) x_t y_t + x_s^T y_s (time slots ignored when kappa = 0).
double curvature_inner(const Vec& x, const Vec& y, const SpaceSpec& spec);

/// |<x,x>_kappa - 1/kappa|; zero in Euclidean mode unless x_t != 0.
double manifold_residual(const Vec& x, const SpaceSpec& spec);
/// |<v,x>_kappa|; in Euclidean mode |v_0|.
double tangency_residual(const Vec& x, const Vec& v, const SpaceSpec& spec);

CurvedPoint north_pole(const SpaceSpec& spec);

/// Closed-form exponential map; kappa = 0 returns x + v.
CurvedPoint exp_map(const CurvedPoint& x, const TangentVector& v, const SpaceSpec& spec);

/// Inverse of exp_map. Throws DegeneratePairError for antipodal points on
/// the sphere.
TangentVector log_map(const CurvedPoint& x, const CurvedPoint& y, const SpaceSpec& spec);

/// Levi-Civita transport of v from T_src to T_dst along the geodesic.
TangentVector parallel_transport(const CurvedPoint& src, const CurvedPoint& dst,
                                 const TangentVector& v, const SpaceSpec& spec);

double geodesic_distance(const CurvedPoint& x, const CurvedPoint& y, const SpaceSpec& spec);

/// 2/kappa - 2<x,y>_kappa. Undefined (UnsupportedModeError) for kappa = 0.
double ambient_sq_distance(const CurvedPoint& x, const CurvedPoint& y, const SpaceSpec& spec);

/// w - kappa <w,x>_kappa x. Idempotent; output is tangent at x.
TangentVector project_to_tangent(const CurvedPoint& x, const Vec& w, const SpaceSpec& spec);

}  // namespace rgfm
