#include "rgfm/init.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace rgfm {

namespace {

FactorState lift(const Mat& rows, const SpaceSpec& spec) {
  const int n = static_cast<int>(rows.rows());
  const int d = spec.dim();
  const int copy = std::min<int>(d, static_cast<int>(rows.cols()));
  const CurvedPoint pole = north_pole(spec);
  FactorState out{Mat(n, d + 1), Mat(n, d + 1)};
  for (int i = 0; i < n; ++i) {
    Vec v = Vec::Zero(d + 1);
    v.segment(1, copy) = rows.row(i).head(copy).transpose();
    if (spec.spherical()) {
      const double angle = spec.sqrt_abs_curvature() * v.norm();
      if (angle > M_PI / 2) v *= (M_PI / 2) / angle;
    }
    const TangentVector tv = TangentVector::unchecked(pole, v);
    const CurvedPoint p = exp_map(pole, tv, spec);
    out.coords.row(i) = p.coords().transpose();
    out.encodings.row(i) = parallel_transport(pole, p, tv, spec).vec().transpose();
  }
  return out;
}

}  // namespace

BundleState init_state(const Graph& graph, const SpectralInit& spectral, const SpaceSpec& tree_spec,
                       const SpaceSpec& cycle_spec) {
  if (spectral.encodings.rows() != graph.num_nodes()) {
    throw DimensionError(fmt::format("{} spectral rows for {} nodes", spectral.encodings.rows(), graph.num_nodes()));
  }
  for (const SpaceSpec& spec : {tree_spec, cycle_spec}) {
    if (spectral.k() != spec.dim()) {
      spdlog::warn("spectral dimension {} differs from factor dimension {}; rows are {}", spectral.k(), spec.dim(),
                   spectral.k() > spec.dim() ? "truncated" : "zero-padded");
    }
  }
  return BundleState{tree_spec, cycle_spec, lift(spectral.encodings, tree_spec), lift(spectral.encodings, cycle_spec)};
}

BundleState init_state(const Graph& graph, const InitConfig& config, const SpaceSpec& tree_spec,
                       const SpaceSpec& cycle_spec) {
  if (config.k < 0) throw ArgumentError("spectral dimension must be >= 1");
  if (graph.num_nodes() == 0) throw ArgumentError("cannot initialize an empty graph");
  const int wanted = config.k == 0 ? std::max(tree_spec.dim(), cycle_spec.dim()) : config.k;
  SpectralOptions options;
  options.mode = config.eigen_mode;
  options.seed = config.seed;
  const SpectralInit spectral = normalized_laplacian_topk(graph, std::min(wanted, graph.num_nodes()), options);
  return init_state(graph, spectral, tree_spec, cycle_spec);
}

}  // namespace rgfm
