#pragma once

#include <span>

#include "rgfm/ccs.hpp"
#include "rgfm/trig.hpp"

namespace rgfm {

// Weight of the manifold-preserving linear map; acts on space-like parts.
struct LinearMapParams {
  Mat weight;  // d_out x d_in
};

struct WeightedPoint {
  CurvedPoint point;
  double weight;
};

/// f_W(x) = [x_t; alpha W x_s] with alpha = sqrt(1/kappa - sgn(kappa) x_t^2) / |W x_s|.
/// The output lands on the d_out-dimensional space of the same curvature for
/// any shape of W. In Euclidean mode returns [0; W x_s].
CurvedPoint manifold_linear(const CurvedPoint& x, const LinearMapParams& params,
                            const SpaceSpec& spec_out);

/// Weighted midpoint: the normalized weighted sum, which minimizes
/// sum_i w_i (2/kappa - 2<c, x_i>_kappa) over the manifold. Weights must be
/// nonnegative. Euclidean mode returns the weighted arithmetic mean.
CurvedPoint geometric_midpoint(std::span<const WeightedPoint> points, const SpaceSpec& spec);

}  // namespace rgfm
