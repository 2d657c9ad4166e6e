#include "rgfm/pretrain.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <spdlog/spdlog.h>

#include "rgfm/rng.hpp"

namespace rgfm {

namespace {

constexpr std::uint64_t kEpochStream = 0x6570;
constexpr std::uint64_t kSampleStream = 0x7361;
constexpr std::uint64_t kDropoutStream = 0x6472;
constexpr std::uint64_t kEmbedStream = 0x656d;
constexpr char kMagic[4] = {'R', 'G', 'F', 'M'};
// Seeds are stored as f64, so they must be exactly representable.
constexpr std::uint64_t kMaxSeed = std::uint64_t{1} << 53;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::vector<int> iota(int n) {
  std::vector<int> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw ArgumentError(fmt::format("cannot write {}", path.string()));
  }
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void f64(double x) { bytes(&x, sizeof x); }
  void tensor(const Mat& m) { bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw ArgumentError(fmt::format("failed writing {}", path.string()));
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!std::filesystem::exists(path)) throw MissingFileError(fmt::format("no such checkpoint {}", path.string()));
    if (!in_) throw ArgumentError(fmt::format("cannot open checkpoint {}", path.string()));
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw FormatError(fmt::format("{}: truncated checkpoint", path_.string()));
    }
  }
  double f64() {
    double x;
    bytes(&x, sizeof x);
    return x;
  }
  int count(const char* field) {
    const double x = f64();
    if (!(x >= 0 && x <= 1e9) || x != std::floor(x)) {
      throw FormatError(fmt::format("{}: invalid {} field {}", path_.string(), field, x));
    }
    return static_cast<int>(x);
  }
  void tensor(Mat& m) { bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(fmt::format("{}: trailing bytes after checkpoint", path_.string()));
    }
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

std::vector<Mat> zeros_like(const std::vector<Mat>& tensors) {
  std::vector<Mat> out;
  for (const Mat& t : tensors) out.push_back(Mat::Zero(t.rows(), t.cols()));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (trees.samples_per_anchor < 1) throw ArgumentError("samples per anchor must be >= 1");
  if (trees.depth < 1 || trees.branch_cap < 1) throw ArgumentError("tree depth and branch cap must be >= 1");
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (threads < 1) throw ArgumentError("threads must be >= 1");
  if (seed >= kMaxSeed) throw ArgumentError("seed must be below 2^53");
  if (model.layers < 0 || model.hidden < 1) throw ArgumentError("layers must be >= 0 and hidden width >= 1");
  if (model.tree_spec.dim() != model.cycle_spec.dim()) {
    throw ArgumentError("the contrastive objective needs equal factor dimensions");
  }
}

void Adam::step(std::vector<Mat>& params, const std::vector<Mat>& grads, AdamState& state) const {
  if (grads.size() != params.size()) throw DimensionError("Adam: one gradient per parameter tensor expected");
  if (state.m.empty()) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i].cwiseAbs2();
    params[i].array() -= learning_rate * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + epsilon);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<Mat> tensors = ckpt.params.flatten();
  if (!ckpt.adam.m.empty() && (ckpt.adam.m.size() != tensors.size() || ckpt.adam.v.size() != tensors.size())) {
    throw DimensionError("checkpoint moments do not match the parameters");
  }
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  w.bytes(&version, sizeof version);
  w.f64(ckpt.model.tree_spec.dim());
  w.f64(ckpt.model.tree_spec.curvature());
  w.f64(ckpt.model.cycle_spec.dim());
  w.f64(ckpt.model.cycle_spec.curvature());
  w.f64(ckpt.model.layers);
  w.f64(ckpt.model.hidden);
  for (const Mat& t : tensors) w.tensor(t);
  const std::vector<Mat> zeros = ckpt.adam.m.empty() ? zeros_like(tensors) : std::vector<Mat>{};
  for (const Mat& t : ckpt.adam.m.empty() ? zeros : ckpt.adam.m) w.tensor(t);
  for (const Mat& t : ckpt.adam.v.empty() ? zeros : ckpt.adam.v) w.tensor(t);
  w.f64(static_cast<double>(ckpt.adam.step));
  w.f64(static_cast<double>(ckpt.seed));
  w.f64(static_cast<double>(ckpt.epochs_done));
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError(fmt::format("{}: not a checkpoint (bad magic)", path.string()));
  }
  std::uint32_t version;
  r.bytes(&version, sizeof version);
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("{}: checkpoint format version {} (this build reads {})", path.string(), version,
                                  kCheckpointVersion));
  }
  const int dim_h = r.count("tree dimension");
  const double kappa_h = r.f64();
  const int dim_s = r.count("cycle dimension");
  const double kappa_s = r.f64();
  Checkpoint ckpt;
  ckpt.model = ModelConfig{SpaceSpec(dim_h, kappa_h), SpaceSpec(dim_s, kappa_s), r.count("layers"), r.count("hidden")};
  ckpt.params = ModelParams::random(ckpt.model, 0);
  std::vector<Mat> tensors = ckpt.params.flatten();
  for (Mat& t : tensors) r.tensor(t);
  ckpt.params.assign(tensors);
  ckpt.adam.m = zeros_like(tensors);
  ckpt.adam.v = zeros_like(tensors);
  for (Mat& t : ckpt.adam.m) r.tensor(t);
  for (Mat& t : ckpt.adam.v) r.tensor(t);
  ckpt.adam.step = static_cast<std::uint64_t>(r.f64());
  ckpt.seed = static_cast<std::uint64_t>(r.f64());
  ckpt.epochs_done = static_cast<std::uint64_t>(r.f64());
  r.expect_end();
  return ckpt;
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint ckpt;
  ckpt.model = config.model;
  ckpt.params = ModelParams::random(config.model, config.seed);
  ckpt.adam.m = zeros_like(ckpt.params.flatten());
  ckpt.adam.v = ckpt.adam.m;
  ckpt.seed = config.seed;
  return ckpt;
}

TrainResult train(const Graph& graph, const TrainConfig& config) {
  config.validate();
  const int n = graph.num_nodes();
  if (n == 0) throw ArgumentError("cannot pretrain on an empty graph");
  if (config.negative_pool == NegativePool::full && n > kFullPoolLimit) {
    throw ArgumentError(fmt::format("full negative pool supports at most {} nodes", kFullPoolLimit));
  }
  TrainResult result{initial_checkpoint(config), {}};
  Checkpoint& ckpt = result.checkpoint;
  const BundleState init = init_state(graph, config.init, config.model.tree_spec, config.model.cycle_spec);
  const Adam adam{config.learning_rate};
  std::vector<Mat> tensors = ckpt.params.flatten();
  const std::vector<int> all_nodes = iota(n);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    const std::uint64_t sample_epoch = config.freeze_samples ? 0 : e;
    std::vector<int> order = all_nodes;
    Engine rng(derive_seed(config.seed, {kEpochStream, e}));
    shuffle(std::span<int>(order), rng);

    double total = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<int> anchors(order.begin() + static_cast<std::ptrdiff_t>(begin),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(anchors.begin(), anchors.end());
      const std::uint64_t sample_seed = derive_seed(config.seed, {kSampleStream, sample_epoch});
      const auto trees = sample_trees(graph, anchors, config.trees, sample_seed);
      const auto cycles = sample_cycles(graph, anchors, config.trees.samples_per_anchor, sample_seed);

      ad::Tape tape(config.threads);
      ckpt.params.assign(tensors);
      const auto vars = register_params(tape, ckpt.params);
      const ForwardOptions options{config.dropout,
                                   derive_seed(config.seed, {kDropoutStream, e, static_cast<std::uint64_t>(batches)})};
      const TapeState out = forward_tape(tape, init, vars, trees, cycles, options);
      const auto& pool = config.negative_pool == NegativePool::full ? all_nodes : anchors;
      const ad::Var loss =
          contrastive_objective(tape, out, config.model.tree_spec, config.model.cycle_spec, pool, config.temperature);
      const double value = tape.value(loss)(0, 0);
      const ad::GradientMap grads = ad::backward(tape, loss);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].allFinite()) {
          throw NumericError(fmt::format("non-finite gradient in parameter tensor {} at epoch {}, step {}", i, epoch,
                                         ckpt.adam.step + 1));
        }
      }
      adam.step(tensors, grads, ckpt.adam);
      total += value;
      ++batches;
    }
    result.loss_trace.push_back(total / batches);
    ++ckpt.epochs_done;
    spdlog::debug("epoch {} mean loss {:.6f}", epoch, result.loss_trace.back());
  }
  ckpt.params.assign(tensors);
  return result;
}

double contrastive_loss(const BundleState& state, std::span<const int> nodes, double temperature) {
  if (nodes.empty()) throw ArgumentError("contrastive loss over an empty node set");
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  BundleState subset = state;
  for (Factor f : {Factor::tree, Factor::cycle}) {
    Mat coords(static_cast<Eigen::Index>(nodes.size()), state.factor(f).coords.cols());
    Mat enc(coords.rows(), coords.cols());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      coords.row(static_cast<Eigen::Index>(i)) = state.factor(f).coords.row(nodes[i]);
      enc.row(static_cast<Eigen::Index>(i)) = state.factor(f).encodings.row(nodes[i]);
    }
    subset.factor(f) = FactorState{coords, enc};
  }
  const Mat h = pole_encodings(subset, Factor::tree);
  const Mat s = pole_encodings(subset, Factor::cycle);
  if (h.cols() != s.cols()) throw DimensionError("contrastive loss needs equal factor dimensions");
  const Mat sim = h * s.transpose() / temperature;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    const double row_top = sim.row(i).maxCoeff();
    const double col_top = sim.col(i).maxCoeff();
    loss += row_top + std::log((sim.row(i).array() - row_top).exp().sum()) - sim(i, i);
    loss += col_top + std::log((sim.col(i).array() - col_top).exp().sum()) - sim(i, i);
  }
  return loss;
}

Mat pole_encodings(const BundleState& state, Factor factor) {
  const SpaceSpec& spec = state.spec(factor);
  const CurvedPoint pole = north_pole(spec);
  Mat out(state.num_nodes(), spec.dim());
  for (int i = 0; i < state.num_nodes(); ++i) {
    const TangentVector z = state.encoding(factor, i);
    out.row(i) = parallel_transport(z.base(), pole, z, spec).vec().tail(spec.dim()).transpose();
  }
  return out;
}

Mat embed(const Graph& graph, const Checkpoint& ckpt, const EmbedConfig& config) {
  if (graph.num_nodes() == 0) throw ArgumentError("cannot embed an empty graph");
  const BundleState init = init_state(graph, config.init, ckpt.model.tree_spec, ckpt.model.cycle_spec);
  const std::vector<int> anchors = iota(graph.num_nodes());
  const std::uint64_t seed = derive_seed(config.seed, {kEmbedStream});
  const auto trees = sample_trees(graph, anchors, config.trees, seed);
  const auto cycles = sample_cycles(graph, anchors, config.trees.samples_per_anchor, seed);

  ad::Tape tape(config.threads);
  const auto vars = register_params(tape, ckpt.params, false);
  const TapeState out = forward_tape(tape, init, vars, trees, cycles);
  const BundleState state = read_state(tape, out, ckpt.model.tree_spec, ckpt.model.cycle_spec);

  Mat table(graph.num_nodes(), ckpt.model.tree_spec.dim() + ckpt.model.cycle_spec.dim());
  table << pole_encodings(state, Factor::tree), pole_encodings(state, Factor::cycle);
  return table;
}

}  // namespace rgfm
