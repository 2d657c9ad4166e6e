#pragma once

// Initial bundle state from spectral features: each node's spectral row z
// is lifted to T_o as [0; z], its coordinate is Exp_o of that vector and its
// encoding the same vector transported to the coordinate.

#include "rgfm/graph.hpp"
#include "rgfm/layer.hpp"
#include "rgfm/spectral.hpp"

namespace rgfm {

struct InitConfig {
  int k = 0;  // spectral dimension; 0 means the factor dimension
  EigenMode eigen_mode = EigenMode::largest;
  std::uint64_t seed = 0;
};

/// Rows longer than a factor's dimension are truncated, shorter ones
/// zero-padded. On a sphere, rows are shrunk to geodesic length pi/2 when
/// they would reach further.
BundleState init_state(const Graph& graph, const SpectralInit& spectral, const SpaceSpec& tree_spec,
                       const SpaceSpec& cycle_spec);

/// Computes the spectral features with K = min(k, num_nodes), then lifts them.
BundleState init_state(const Graph& graph, const InitConfig& config, const SpaceSpec& tree_spec,
                       const SpaceSpec& cycle_spec);

}  // namespace rgfm
