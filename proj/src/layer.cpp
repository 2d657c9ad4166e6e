#include "rgfm/layer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "rgfm/trig.hpp"

namespace rgfm {

namespace {

Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Engine& rng) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = bound * (2.0 * uniform_unit(rng) - 1.0);
  }
  return m;
}

FactorParams random_factor(int dim, int counterpart_dim, int hidden, Engine& rng) {
  FactorParams p;
  const double own = 1.0 / std::sqrt(static_cast<double>(dim));
  p.query = uniform_matrix(dim, counterpart_dim, 1.0 / std::sqrt(static_cast<double>(counterpart_dim)), rng);
  p.key = uniform_matrix(dim, dim, own, rng);
  p.value = uniform_matrix(dim, dim, own, rng);
  p.enc_query = uniform_matrix(dim, counterpart_dim, 1.0 / std::sqrt(static_cast<double>(counterpart_dim)), rng);
  p.enc_key = uniform_matrix(dim, dim, own, rng);
  const int in = 2 * (dim + 1);
  const double phi_in = 1.0 / std::sqrt(static_cast<double>(in));
  const double phi_out = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.phi.hidden_weight = uniform_matrix(hidden, in, phi_in, rng);
  p.phi.hidden_bias = uniform_matrix(hidden, 1, phi_in, rng);
  p.phi.out_weight = uniform_matrix(hidden, 1, phi_out, rng);
  p.phi.out_bias = phi_out * (2.0 * uniform_unit(rng) - 1.0);
  return p;
}

std::vector<double> softmax(const std::vector<double>& scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += out[i] = std::exp(scores[i] - top);
  for (double& v : out) v /= total;
  return out;
}

// The query of a factor lives on the counterpart's curvature at the factor's dimension.
SpaceSpec query_spec(const BundleState& state, Factor factor) {
  return SpaceSpec(state.spec(factor).dim(), state.spec(counterpart(factor)).curvature());
}

}  // namespace

CurvedPoint BundleState::coord(Factor f, int node) const {
  return CurvedPoint::unchecked(factor(f).coords.row(node).transpose());
}

TangentVector BundleState::encoding(Factor f, int node) const {
  return TangentVector::unchecked(coord(f, node), factor(f).encodings.row(node).transpose());
}

std::pair<double, double> BundleState::max_residuals() const {
  double quadric = 0.0;
  double tangency = 0.0;
  for (Factor f : {Factor::tree, Factor::cycle}) {
    for (int i = 0; i < num_nodes(); ++i) {
      const Vec p = factor(f).coords.row(i).transpose();
      const Vec z = factor(f).encodings.row(i).transpose();
      quadric = std::max(quadric, manifold_residual(p, spec(f)));
      tangency = std::max(tangency, tangency_residual(p, z, spec(f)));
    }
  }
  return {quadric, tangency};
}

double ScalarMap::operator()(const Vec& query, const Vec& key) const {
  const auto half = query.size();
  Vec pre = hidden_bias + hidden_weight.leftCols(half) * query + hidden_weight.rightCols(half) * key;
  return out_weight.dot(tanh_array(pre.array()).matrix()) + out_bias;
}

LayerParams LayerParams::random(const SpaceSpec& tree_spec, const SpaceSpec& cycle_spec, int hidden,
                                Engine& rng) {
  LayerParams p;
  p.tree = random_factor(tree_spec.dim(), cycle_spec.dim(), hidden, rng);
  p.cycle = random_factor(cycle_spec.dim(), tree_spec.dim(), hidden, rng);
  return p;
}

std::vector<std::vector<int>> attention_sources(const Substructure& sub) {
  const int m = sub.size();
  std::vector<std::vector<int>> omega(static_cast<std::size_t>(m));
  if (sub.kind == SubstructureKind::tree) {
    for (int i = 1; i < m; ++i) omega[sub.parents[i]].push_back(i);
  } else if (m >= 3) {
    for (int i = 0; i < m; ++i) omega[i] = {(i + m - 1) % m, (i + 1) % m};
  } else if (m == 2) {
    omega[0] = {1};
    omega[1] = {0};
  }
  for (int i = 0; i < m; ++i) omega[i].push_back(i);
  return omega;
}

CoordinateUpdate cross_geometry_attention(const Substructure& sub, const BundleState& state,
                                          const LayerParams& params, Factor factor) {
  const SpaceSpec& spec = state.spec(factor);
  const SpaceSpec qspec = query_spec(state, factor);
  const FactorParams& fp = params.factor(factor);
  const int m = sub.size();

  std::vector<CurvedPoint> keys, values, queries;
  for (int node : sub.nodes) {
    const CurvedPoint p = state.coord(factor, node);
    keys.push_back(manifold_linear(p, {fp.key}, spec));
    values.push_back(manifold_linear(p, {fp.value}, spec));
    queries.push_back(manifold_linear(state.coord(counterpart(factor), node), {fp.query}, qspec));
  }

  CoordinateUpdate out;
  const auto omega = attention_sources(sub);
  for (int i = 0; i < m; ++i) {
    AttentionRow row{omega[i], {}};
    if (sub.degenerate) {
      row.weights.assign(row.sources.size(), 1.0 / static_cast<double>(row.sources.size()));
    } else {
      std::vector<double> scores;
      for (int j : row.sources) scores.push_back(fp.phi(queries[i].coords(), keys[j].coords()));
      row.weights = softmax(scores);
    }
    std::vector<WeightedPoint> weighted;
    for (std::size_t s = 0; s < row.sources.size(); ++s) {
      weighted.push_back({values[row.sources[s]], row.weights[s]});
    }
    out.coords.push_back(geometric_midpoint(weighted, spec));
    out.attention.push_back(std::move(row));
  }
  return out;
}

TangentVector bundle_convolution(std::span<const TangentVector> sources, std::span<const double> weights,
                                 const CurvedPoint& target, const SpaceSpec& spec) {
  if (sources.size() != weights.size()) {
    throw DimensionError(fmt::format("{} sources but {} weights", sources.size(), weights.size()));
  }
  const double kappa = spec.curvature();
  const Vec& pt = target.coords();
  Vec out = Vec::Zero(pt.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Vec& pi = sources[i].base().coords();
    const Vec& zi = sources[i].vec();
    const double denom = 1.0 + kappa * curvature_inner(pi, pt, spec);
    if (denom <= kZeroTol) throw DegeneratePairError("bundle_convolution: antipodal source and target");
    const double coef = kappa * weights[i] * curvature_inner(zi, pt, spec) / denom;
    out += weights[i] * zi - coef * (pi + pt);
  }
  return TangentVector::unchecked(target, std::move(out));
}

std::vector<TangentVector> substructure_encode(const Substructure& sub, const BundleState& state,
                                               const std::vector<CurvedPoint>& new_coords,
                                               const LayerParams& params, Factor factor) {
  const SpaceSpec& spec = state.spec(factor);
  const SpaceSpec qspec = query_spec(state, factor);
  const FactorParams& fp = params.factor(factor);
  const int m = sub.size();

  std::vector<TangentVector> sources;
  std::vector<CurvedPoint> keys, queries;
  for (int pos = 0; pos < m; ++pos) {
    const int node = sub.nodes[pos];
    sources.push_back(state.encoding(factor, node));
    keys.push_back(manifold_linear(new_coords[pos], {fp.enc_key}, spec));
    queries.push_back(manifold_linear(state.coord(counterpart(factor), node), {fp.enc_query}, qspec));
  }

  std::vector<TangentVector> out;
  for (int t = 0; t < m; ++t) {
    std::vector<double> weights;
    if (sub.degenerate) {
      weights.assign(static_cast<std::size_t>(m), 1.0 / m);
    } else {
      std::vector<double> scores;
      for (int i = 0; i < m; ++i) scores.push_back(fp.phi(queries[t].coords(), keys[i].coords()));
      weights = softmax(scores);
    }
    const TangentVector z = bundle_convolution(sources, weights, new_coords[t], spec);
    out.push_back(project_to_tangent(new_coords[t], z.vec(), spec));
  }
  return out;
}

std::pair<CurvedPoint, TangentVector> graph_level_aggregate(std::span<const TangentVector> samples,
                                                            const SpaceSpec& spec) {
  if (samples.empty()) throw ArgumentError("graph_level_aggregate: no samples");
  std::vector<WeightedPoint> points;
  for (const auto& s : samples) points.push_back({s.base(), 1.0});
  CurvedPoint mid = geometric_midpoint(points, spec);
  const std::vector<double> weights(samples.size(), 1.0 / static_cast<double>(samples.size()));
  const TangentVector z = bundle_convolution(samples, weights, mid, spec);
  TangentVector projected = project_to_tangent(mid, z.vec(), spec);
  return {std::move(mid), std::move(projected)};
}

BundleState layer_forward(const BundleState& state, std::span<const Substructure> trees,
                          std::span<const Substructure> cycles, const LayerParams& params) {
  BundleState out = state;
  for (Factor factor : {Factor::tree, Factor::cycle}) {
    const auto subs = factor == Factor::tree ? trees : cycles;
    std::vector<std::vector<TangentVector>> samples(static_cast<std::size_t>(state.num_nodes()));
    for (const Substructure& sub : subs) {
      const CoordinateUpdate update = cross_geometry_attention(sub, state, params, factor);
      const auto encodings = substructure_encode(sub, state, update.coords, params, factor);
      for (int pos = 0; pos < sub.size(); ++pos) samples[sub.nodes[pos]].push_back(encodings[pos]);
    }
    FactorState& target = out.factor(factor);
    for (int node = 0; node < state.num_nodes(); ++node) {
      if (samples[node].empty()) continue;
      auto [p, z] = graph_level_aggregate(samples[node], state.spec(factor));
      target.coords.row(node) = p.coords().transpose();
      target.encodings.row(node) = z.vec().transpose();
    }
  }
  return out;
}

}  // namespace rgfm
