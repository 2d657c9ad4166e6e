#pragma once

// Geometric contrastive pretraining and the embedding pass.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rgfm/graph.hpp"
#include "rgfm/init.hpp"
#include "rgfm/model.hpp"
#include "rgfm/sampling.hpp"

namespace rgfm {

enum class NegativePool { batch, full };

/// Largest graph the full negative pool accepts.
inline constexpr int kFullPoolLimit = 2048;

struct TrainConfig {
  ModelConfig model;
  InitConfig init;
  int epochs = 200;
  int batch_size = 8;  // anchor nodes per step
  double learning_rate = 0.01;
  double dropout = 0.1;
  std::uint64_t seed = 7;
  TreeSampling trees;  // samples_per_anchor is also used for cycles
  double temperature = 1.0;
  NegativePool negative_pool = NegativePool::batch;
  bool freeze_samples = false;
  int threads = 1;

  /// Throws ArgumentError on out-of-range fields.
  void validate() const;
};

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  std::uint64_t step = 0;
};

struct Adam {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// One bias-corrected update of params in place; moments start at zero.
  void step(std::vector<Mat>& params, const std::vector<Mat>& grads, AdamState& state) const;
};

struct Checkpoint {
  ModelConfig model;
  ModelParams params;
  AdamState adam;
  std::uint64_t seed = 0;
  std::uint64_t epochs_done = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: "RGFM", u32 version, then little-endian f64 fields in
/// order: d_H, kappa_H, d_S, kappa_S, layers, hidden, every parameter tensor
/// (ModelParams::flatten order, column-major), Adam first moments, Adam
/// second moments (same order), Adam step, seed, epochs done.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws FormatError on a bad magic, version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Fresh parameters and zero moments for config.
Checkpoint initial_checkpoint(const TrainConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_trace;  // mean J0 over the batches of each epoch
};

/// Samples substructures for every epoch (or once when frozen), runs the
/// stack per batch, and takes one Adam step per batch on J0.
TrainResult train(const Graph& graph, const TrainConfig& config);

/// J(H,S) + J(S,H) over nodes with the encodings transported to the poles.
double contrastive_loss(const BundleState& state, std::span<const int> nodes, double temperature);

struct EmbedConfig {
  InitConfig init;
  TreeSampling trees;
  std::uint64_t seed = 7;
  int threads = 1;
};

/// Forward stack without dropout over substructures sampled at every node.
/// Row i is [PT(z_H -> pole) space part || PT(z_S -> pole) space part].
Mat embed(const Graph& graph, const Checkpoint& ckpt, const EmbedConfig& config);

/// Encodings transported to the pole, one row per node, space parts only.
Mat pole_encodings(const BundleState& state, Factor factor);

}  // namespace rgfm
