#pragma once

// The layer stack evaluated on an autodiff tape.
//
// All substructures of one factor are flattened into "slots" (one per
// (substructure, position)), so a layer costs a fixed handful of tape ops
// per factor regardless of how many substructures were sampled. Only the
// nodes touched by some substructure are gathered and updated.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rgfm/autodiff.hpp"
#include "rgfm/layer.hpp"
#include "rgfm/sampling.hpp"

namespace rgfm {

struct ModelConfig {
  SpaceSpec tree_spec{32, -1.0};
  SpaceSpec cycle_spec{32, 1.0};
  int layers = 2;
  int hidden = 256;
};

struct ModelParams {
  std::vector<LayerParams> layers;

  static ModelParams random(const ModelConfig& config, std::uint64_t seed);

  /// Tensors in storage order: per layer, tree then cycle factor, each as
  /// query, key, value, enc_query, enc_key, phi hidden weight, hidden bias,
  /// output weight, output bias (1 x 1).
  std::vector<Mat> flatten() const;
  /// Inverse of flatten; shapes must match.
  void assign(std::span<const Mat> tensors);
  std::size_t num_scalars() const;
};

struct FactorVars {
  ad::Var query, key, value, enc_query, enc_key;
  ad::PhiVars phi;
};

struct LayerVars {
  FactorVars tree;
  FactorVars cycle;
  const FactorVars& factor(Factor f) const { return f == Factor::tree ? tree : cycle; }
};

/// Puts every tensor of params on the tape in flatten order, as trainable
/// leaves or as constants.
std::vector<LayerVars> register_params(ad::Tape& tape, const ModelParams& params, bool trainable = true);

/// Tensors per layer in flatten order.
inline constexpr std::size_t kTensorsPerLayer = 18;

/// Groups leaves given in flatten order (e.g. the leaves of a gradient check)
/// into per-layer variables.
std::vector<LayerVars> bind_layer_vars(std::span<const ad::Var> leaves);

struct TapeState {
  ad::Var tree_coords, tree_encodings, cycle_coords, cycle_encodings;
  ad::Var coords(Factor f) const { return f == Factor::tree ? tree_coords : cycle_coords; }
  ad::Var encodings(Factor f) const { return f == Factor::tree ? tree_encodings : cycle_encodings; }
};

struct ForwardOptions {
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

/// Index structure of one factor's substructures, reused by every layer.
/// Sources and query rows are local indices into involved.
struct SlotPlan {
  std::vector<int> involved;  // global ids of nodes in some slot, ascending
  std::shared_ptr<const ad::PairIndex> attention;  // target slot <- Omega source node
  std::shared_ptr<const std::vector<int>> attention_queries;  // node of each attention pair's target
  std::shared_ptr<const ad::PairIndex> encode;  // target slot <- every node of its substructure
  std::shared_ptr<const std::vector<int>> encode_queries;  // node of each encode pair's target
  std::shared_ptr<const std::vector<int>> encode_keys;  // slot of each encode pair's source
  std::shared_ptr<const std::vector<char>> uniform;  // per slot: degenerate substructure
  std::shared_ptr<const ad::PairIndex> aggregate;  // involved node <- each of its slots
  Mat aggregate_weights;  // 1 / (slots of the node), one per aggregate pair

  static SlotPlan build(std::span<const Substructure> subs, int num_nodes);
  bool empty() const { return involved.empty(); }
};

/// Records the layer stack on the tape starting from a constant copy of
/// init. The same substructures drive every layer.
TapeState forward_tape(ad::Tape& tape, const BundleState& init, std::span<const LayerVars> layers,
                       std::span<const Substructure> trees, std::span<const Substructure> cycles,
                       const ForwardOptions& options = {});

/// J(H,S) + J(S,H) over nodes, on encodings transported to the poles.
ad::Var contrastive_objective(ad::Tape& tape, const TapeState& state, const SpaceSpec& tree_spec,
                              const SpaceSpec& cycle_spec, std::span<const int> nodes, double temperature);

/// Reads tape values back into a BundleState.
BundleState read_state(const ad::Tape& tape, const TapeState& state, const SpaceSpec& tree_spec,
                       const SpaceSpec& cycle_spec);

/// Plain evaluation of the stack with the reference layer (no dropout).
BundleState forward_reference(const BundleState& init, const ModelParams& params,
                              std::span<const Substructure> trees, std::span<const Substructure> cycles);

}  // namespace rgfm
