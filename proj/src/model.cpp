#include "rgfm/model.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "rgfm/rng.hpp"

namespace rgfm {

namespace {

constexpr std::uint64_t kParamStream = 0x7061;
constexpr int kTensorsPerFactor = 9;

void push_factor(std::vector<Mat>& out, const FactorParams& f) {
  out.push_back(f.query);
  out.push_back(f.key);
  out.push_back(f.value);
  out.push_back(f.enc_query);
  out.push_back(f.enc_key);
  out.push_back(f.phi.hidden_weight);
  out.push_back(f.phi.hidden_bias);
  out.push_back(f.phi.out_weight);
  out.push_back(Mat::Constant(1, 1, f.phi.out_bias));
}

template <typename Dst>
void take(Dst& dst, const Mat& src) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
    throw DimensionError(fmt::format("parameter of shape {}x{} cannot take a {}x{} tensor", dst.rows(), dst.cols(),
                                     src.rows(), src.cols()));
  }
  dst = src;
}

void assign_factor(FactorParams& f, std::span<const Mat> t) {
  take(f.query, t[0]);
  take(f.key, t[1]);
  take(f.value, t[2]);
  take(f.enc_query, t[3]);
  take(f.enc_key, t[4]);
  take(f.phi.hidden_weight, t[5]);
  take(f.phi.hidden_bias, t[6]);
  take(f.phi.out_weight, t[7]);
  if (t[8].size() != 1) throw DimensionError("phi output bias must be a single value");
  f.phi.out_bias = t[8](0, 0);
}

FactorVars register_factor(ad::Tape& tape, const FactorParams& f, bool trainable) {
  auto leaf = [&](const Mat& m) { return trainable ? tape.param(m) : tape.constant(m); };
  FactorVars v;
  v.query = leaf(f.query);
  v.key = leaf(f.key);
  v.value = leaf(f.value);
  v.enc_query = leaf(f.enc_query);
  v.enc_key = leaf(f.enc_key);
  v.phi.hidden_weight = leaf(f.phi.hidden_weight);
  v.phi.hidden_bias = leaf(f.phi.hidden_bias);
  v.phi.out_weight = leaf(f.phi.out_weight);
  v.phi.out_bias = leaf(Mat::Constant(1, 1, f.phi.out_bias));
  return v;
}

struct FactorUpdate {
  ad::Var coords;
  ad::Var encodings;
};

FactorUpdate factor_step(ad::Tape& t, const SlotPlan& plan, const TapeState& in, const FactorVars& p,
                         Factor factor, const SpaceSpec& spec, const SpaceSpec& counterpart_spec,
                         const ForwardOptions& options, std::uint64_t layer) {
  const double kappa = spec.curvature();
  const double kappa_c = counterpart_spec.curvature();
  const Factor other = counterpart(factor);
  const auto stream = static_cast<std::uint64_t>(factor == Factor::tree ? 0 : 1);
  const ad::Dropout attention_drop{options.dropout, derive_seed(options.seed, {layer, stream, 0})};
  const ad::Dropout encode_drop{options.dropout, derive_seed(options.seed, {layer, stream, 1})};

  const ad::Var coords = ad::gather_rows(t, in.coords(factor), plan.involved);
  const ad::Var encodings = ad::gather_rows(t, in.encodings(factor), plan.involved);
  const ad::Var other_coords = ad::gather_rows(t, in.coords(other), plan.involved);

  // Cross-geometry attention: queries from the counterpart factor.
  const ad::Var keys = ad::manifold_linear(t, coords, p.key, kappa);
  const ad::Var values = ad::manifold_linear(t, coords, p.value, kappa);
  const ad::Var queries = ad::manifold_linear(t, other_coords, p.query, kappa_c);
  auto key_rows = std::make_shared<const std::vector<int>>(plan.attention->source);
  const ad::Var scores =
      ad::pair_scores(t, queries, keys, plan.attention_queries, key_rows, p.phi, attention_drop);
  const ad::Var alpha = ad::segment_softmax(t, scores, plan.attention, plan.uniform);
  const ad::Var slot_coords =
      ad::midpoint_normalize(t, ad::segment_weighted_sum(t, values, alpha, plan.attention), kappa);

  // Bundle convolution of the layer-input encodings into the updated slots.
  const ad::Var enc_keys = ad::manifold_linear(t, slot_coords, p.enc_key, kappa);
  const ad::Var enc_queries = ad::manifold_linear(t, other_coords, p.enc_query, kappa_c);
  const ad::Var enc_scores =
      ad::pair_scores(t, enc_queries, enc_keys, plan.encode_queries, plan.encode_keys, p.phi, encode_drop);
  const ad::Var beta = ad::segment_softmax(t, enc_scores, plan.encode, plan.uniform);
  const ad::Var slot_enc = ad::project_tangent(
      t, slot_coords, ad::bundle_conv(t, coords, encodings, slot_coords, beta, plan.encode, kappa), kappa);

  // Graph-level aggregation over each node's samples.
  const ad::Var weights = t.constant(plan.aggregate_weights);
  const ad::Var node_coords =
      ad::midpoint_normalize(t, ad::segment_weighted_sum(t, slot_coords, weights, plan.aggregate), kappa);
  const ad::Var node_enc = ad::project_tangent(
      t, node_coords, ad::bundle_conv(t, slot_coords, slot_enc, node_coords, weights, plan.aggregate, kappa),
      kappa);

  return {ad::replace_rows(t, in.coords(factor), plan.involved, node_coords),
          ad::replace_rows(t, in.encodings(factor), plan.involved, node_enc)};
}

}  // namespace

ModelParams ModelParams::random(const ModelConfig& config, std::uint64_t seed) {
  if (config.layers < 0) throw ArgumentError("layer count must be nonnegative");
  if (config.hidden < 1) throw ArgumentError("phi hidden width must be >= 1");
  Engine rng(derive_seed(seed, {kParamStream}));
  ModelParams out;
  for (int l = 0; l < config.layers; ++l) {
    out.layers.push_back(LayerParams::random(config.tree_spec, config.cycle_spec, config.hidden, rng));
  }
  return out;
}

std::vector<Mat> ModelParams::flatten() const {
  std::vector<Mat> out;
  for (const LayerParams& l : layers) {
    push_factor(out, l.tree);
    push_factor(out, l.cycle);
  }
  return out;
}

void ModelParams::assign(std::span<const Mat> tensors) {
  if (tensors.size() != layers.size() * 2 * kTensorsPerFactor) {
    throw DimensionError(fmt::format("expected {} parameter tensors, got {}", layers.size() * 2 * kTensorsPerFactor,
                                     tensors.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    assign_factor(layers[l].tree, tensors.subspan(l * 2 * kTensorsPerFactor, kTensorsPerFactor));
    assign_factor(layers[l].cycle, tensors.subspan((l * 2 + 1) * kTensorsPerFactor, kTensorsPerFactor));
  }
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const Mat& m : flatten()) n += static_cast<std::size_t>(m.size());
  return n;
}

std::vector<LayerVars> register_params(ad::Tape& tape, const ModelParams& params, bool trainable) {
  std::vector<LayerVars> out;
  for (const LayerParams& l : params.layers) {
    LayerVars v;
    v.tree = register_factor(tape, l.tree, trainable);
    v.cycle = register_factor(tape, l.cycle, trainable);
    out.push_back(v);
  }
  return out;
}

std::vector<LayerVars> bind_layer_vars(std::span<const ad::Var> leaves) {
  if (leaves.size() % kTensorsPerLayer != 0) {
    throw DimensionError(fmt::format("{} leaves do not split into layers of {}", leaves.size(), kTensorsPerLayer));
  }
  auto factor = [&](std::size_t b) {
    return FactorVars{leaves[b], leaves[b + 1], leaves[b + 2], leaves[b + 3], leaves[b + 4],
                      {leaves[b + 5], leaves[b + 6], leaves[b + 7], leaves[b + 8]}};
  };
  std::vector<LayerVars> out;
  for (std::size_t b = 0; b < leaves.size(); b += kTensorsPerLayer) out.push_back({factor(b), factor(b + 9)});
  return out;
}

SlotPlan SlotPlan::build(std::span<const Substructure> subs, int num_nodes) {
  SlotPlan plan;
  std::vector<int> local(static_cast<std::size_t>(num_nodes), -1);
  for (const Substructure& sub : subs) {
    for (int v : sub.nodes) {
      if (v < 0 || v >= num_nodes) throw DimensionError(fmt::format("substructure node {} out of range", v));
      local[v] = 0;
    }
  }
  for (int v = 0; v < num_nodes; ++v) {
    if (local[v] == 0) {
      local[v] = static_cast<int>(plan.involved.size());
      plan.involved.push_back(v);
    }
  }

  auto attention = std::make_shared<ad::PairIndex>();
  auto attention_queries = std::make_shared<std::vector<int>>();
  auto encode = std::make_shared<ad::PairIndex>();
  auto encode_queries = std::make_shared<std::vector<int>>();
  auto encode_keys = std::make_shared<std::vector<int>>();
  auto uniform = std::make_shared<std::vector<char>>();
  std::vector<std::vector<int>> slots_of(plan.involved.size());

  int base = 0;
  for (const Substructure& sub : subs) {
    const auto omega = attention_sources(sub);
    for (int pos = 0; pos < sub.size(); ++pos) {
      const int node = local[sub.nodes[pos]];
      attention->open_segment();
      for (int j : omega[pos]) {
        attention->add(local[sub.nodes[j]]);
        attention_queries->push_back(node);
      }
      encode->open_segment();
      for (int i = 0; i < sub.size(); ++i) {
        encode->add(local[sub.nodes[i]]);
        encode_queries->push_back(node);
        encode_keys->push_back(base + i);
      }
      uniform->push_back(sub.degenerate ? 1 : 0);
      slots_of[node].push_back(base + pos);
    }
    base += sub.size();
  }

  auto aggregate = std::make_shared<ad::PairIndex>();
  std::vector<double> weights;
  for (const auto& slots : slots_of) {
    aggregate->open_segment();
    for (int s : slots) {
      aggregate->add(s);
      weights.push_back(1.0 / static_cast<double>(slots.size()));
    }
  }
  plan.aggregate_weights = Eigen::Map<const Mat>(weights.data(), static_cast<Eigen::Index>(weights.size()), 1);
  plan.attention = std::move(attention);
  plan.attention_queries = std::move(attention_queries);
  plan.encode = std::move(encode);
  plan.encode_queries = std::move(encode_queries);
  plan.encode_keys = std::move(encode_keys);
  plan.uniform = std::move(uniform);
  plan.aggregate = std::move(aggregate);
  return plan;
}

TapeState forward_tape(ad::Tape& tape, const BundleState& init, std::span<const LayerVars> layers,
                       std::span<const Substructure> trees, std::span<const Substructure> cycles,
                       const ForwardOptions& options) {
  TapeState state{tape.constant(init.tree.coords), tape.constant(init.tree.encodings),
                  tape.constant(init.cycle.coords), tape.constant(init.cycle.encodings)};
  const SlotPlan tree_plan = SlotPlan::build(trees, init.num_nodes());
  const SlotPlan cycle_plan = SlotPlan::build(cycles, init.num_nodes());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    TapeState next = state;
    if (!tree_plan.empty()) {
      auto [p, z] = factor_step(tape, tree_plan, state, layers[l].tree, Factor::tree, init.tree_spec,
                                init.cycle_spec, options, l);
      next.tree_coords = p;
      next.tree_encodings = z;
    }
    if (!cycle_plan.empty()) {
      auto [p, z] = factor_step(tape, cycle_plan, state, layers[l].cycle, Factor::cycle, init.cycle_spec,
                                init.tree_spec, options, l);
      next.cycle_coords = p;
      next.cycle_encodings = z;
    }
    state = next;
  }
  return state;
}

ad::Var contrastive_objective(ad::Tape& tape, const TapeState& state, const SpaceSpec& tree_spec,
                              const SpaceSpec& cycle_spec, std::span<const int> nodes, double temperature) {
  if (tree_spec.dim() != cycle_spec.dim()) {
    throw DimensionError(fmt::format("contrasting factors of dimension {} and {}", tree_spec.dim(), cycle_spec.dim()));
  }
  if (nodes.empty()) throw ArgumentError("contrastive objective over an empty node set");
  const std::vector<int> rows(nodes.begin(), nodes.end());
  const auto n = static_cast<Eigen::Index>(rows.size());
  auto identity = std::make_shared<ad::PairIndex>();
  for (Eigen::Index i = 0; i < n; ++i) {
    identity->open_segment();
    identity->add(static_cast<int>(i));
  }
  const ad::Var ones = tape.constant(Mat::Ones(n, 1));

  auto at_pole = [&](Factor f, const SpaceSpec& spec) {
    const Mat pole = north_pole(spec).coords().transpose().replicate(n, 1);
    const ad::Var transported =
        ad::bundle_conv(tape, ad::gather_rows(tape, state.coords(f), rows),
                        ad::gather_rows(tape, state.encodings(f), rows), tape.constant(pole), ones, identity,
                        spec.curvature());
    return ad::slice_cols(tape, transported, 1, spec.dim());
  };
  return ad::contrastive(tape, at_pole(Factor::tree, tree_spec), at_pole(Factor::cycle, cycle_spec), temperature);
}

BundleState read_state(const ad::Tape& tape, const TapeState& state, const SpaceSpec& tree_spec,
                       const SpaceSpec& cycle_spec) {
  return BundleState{tree_spec, cycle_spec,
                     FactorState{tape.value(state.tree_coords), tape.value(state.tree_encodings)},
                     FactorState{tape.value(state.cycle_coords), tape.value(state.cycle_encodings)}};
}

BundleState forward_reference(const BundleState& init, const ModelParams& params,
                              std::span<const Substructure> trees, std::span<const Substructure> cycles) {
  BundleState state = init;
  for (const LayerParams& layer : params.layers) state = layer_forward(state, trees, cycles, layer);
  return state;
}

}  // namespace rgfm
