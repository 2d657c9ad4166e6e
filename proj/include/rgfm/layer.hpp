#pragma once

// Universal Riemannian layer on the product bundle, reference implementation.
//
// Each node carries a coordinate and a tangent encoding in two factors: the
// tree factor (hyperbolic by default) updated over sampled trees, and the
// cycle factor (hyperspherical by default) updated over sampled 3/4-cycles.
// This file evaluates the layer directly with the geometry API, one
// substructure at a time. The training path (model.hpp) evaluates the same
// math batched on an autodiff tape and is tested against this one.

#include <span>
#include <utility>
#include <vector>

#include "rgfm/ccs.hpp"
#include "rgfm/rng.hpp"
#include "rgfm/riemann_ops.hpp"
#include "rgfm/sampling.hpp"

namespace rgfm {

enum class Factor { tree, cycle };

inline Factor counterpart(Factor f) { return f == Factor::tree ? Factor::cycle : Factor::tree; }

struct FactorState {
  Mat coords;     // num_nodes x (d+1), rows on the factor manifold
  Mat encodings;  // num_nodes x (d+1), row i tangent at coords row i
};

struct BundleState {
  SpaceSpec tree_spec;
  SpaceSpec cycle_spec;
  FactorState tree;
  FactorState cycle;

  int num_nodes() const { return static_cast<int>(tree.coords.rows()); }
  const SpaceSpec& spec(Factor f) const { return f == Factor::tree ? tree_spec : cycle_spec; }
  const FactorState& factor(Factor f) const { return f == Factor::tree ? tree : cycle; }
  FactorState& factor(Factor f) { return f == Factor::tree ? tree : cycle; }

  CurvedPoint coord(Factor f, int node) const;
  TangentVector encoding(Factor f, int node) const;
  /// Largest quadric residual over coordinates and tangency residual over encodings.
  std::pair<double, double> max_residuals() const;
};

/// phi([q || k]) = out_weight . tanh(hidden_weight [q; k] + hidden_bias) + out_bias.
struct ScalarMap {
  Mat hidden_weight;  // hidden x 2(d+1)
  Vec hidden_bias;
  Vec out_weight;
  double out_bias = 0.0;

  int hidden() const { return static_cast<int>(hidden_weight.rows()); }
  double operator()(const Vec& query, const Vec& key) const;
};

/// Trainable parameters of one factor within one layer. Queries are read
/// from the counterpart factor: query is d_F x d_counterpart.
struct FactorParams {
  Mat query;
  Mat key;
  Mat value;
  Mat enc_query;  // attention of the encoding (bundle convolution) step
  Mat enc_key;
  ScalarMap phi;
};

struct LayerParams {
  FactorParams tree;
  FactorParams cycle;

  const FactorParams& factor(Factor f) const { return f == Factor::tree ? tree : cycle; }
  FactorParams& factor(Factor f) { return f == Factor::tree ? tree : cycle; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static LayerParams random(const SpaceSpec& tree_spec, const SpaceSpec& cycle_spec, int hidden,
                            Engine& rng);
};

/// Attention sets Omega per position: children plus self for trees, the two
/// ring neighbors plus self for cycles (the other node plus self for a
/// degenerate pair). Self is always listed last.
std::vector<std::vector<int>> attention_sources(const Substructure& sub);

struct AttentionRow {
  std::vector<int> sources;  // positions in the substructure
  std::vector<double> weights;
};

struct CoordinateUpdate {
  std::vector<CurvedPoint> coords;  // per position
  std::vector<AttentionRow> attention;
};

/// Cross-geometry attention over one substructure: keys and values from the
/// factor's own coordinates, queries from the counterpart factor, softmax of
/// phi over each Omega, midpoint of the values. All targets read pre-update
/// coordinates, so no node sees its ancestors.
CoordinateUpdate cross_geometry_attention(const Substructure& sub, const BundleState& state,
                                          const LayerParams& params, Factor factor);

/// sum_i w_i PT_{p_i -> target}(z_i), in closed form.
TangentVector bundle_convolution(std::span<const TangentVector> sources, std::span<const double> weights,
                                 const CurvedPoint& target, const SpaceSpec& spec);

/// Encodings of the substructure bundle-convolved into each node's updated
/// coordinate, weighted by phi-attention over the whole substructure.
std::vector<TangentVector> substructure_encode(const Substructure& sub, const BundleState& state,
                                               const std::vector<CurvedPoint>& new_coords,
                                               const LayerParams& params, Factor factor);

/// Midpoint (unit weights) of a node's per-sample coordinates and the mean
/// of its per-sample encodings transported there.
std::pair<CurvedPoint, TangentVector> graph_level_aggregate(std::span<const TangentVector> samples,
                                                            const SpaceSpec& spec);

/// One full layer: attention and encoding per substructure (trees on the tree
/// factor, cycles on the cycle factor), then per-node aggregation. Nodes in
/// no substructure of a factor keep their slot in that factor.
BundleState layer_forward(const BundleState& state, std::span<const Substructure> trees,
                          std::span<const Substructure> cycles, const LayerParams& params);

}  // namespace rgfm
