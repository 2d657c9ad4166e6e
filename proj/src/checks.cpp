#include "rgfm/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rgfm/autodiff.hpp"
#include "rgfm/init.hpp"
#include "rgfm/layer.hpp"
#include "rgfm/model.hpp"
#include "rgfm/riemann_ops.hpp"

namespace rgfm {

namespace {

constexpr double kCurvatures[] = {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::size_t scaled(std::size_t n, const SelfcheckOptions& options) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.scale)));
}

void record(SuiteResult& r, double error) {
  ++r.cases;
  if (!(error <= r.tolerance)) ++r.failures;
  if (std::isnan(error) || error > r.worst) r.worst = std::isnan(error) ? INFINITY : error;
}

Vec gaussian(int n, Engine& rng, double scale) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * standard_normal(rng);
  return v;
}

// Shortens v to geodesic length max_angle / sqrt|kappa| when longer. On the
// sphere this stays inside the injectivity radius; on the hyperboloid it
// keeps coordinates of order 10 so absolute tolerances stay meaningful.
Vec capped(Vec v, const SpaceSpec& spec, double max_angle) {
  const double angle = spec.sqrt_abs_curvature() * std::sqrt(std::max(0.0, curvature_inner(v, v, spec)));
  if (angle > max_angle) v *= max_angle / angle;
  return v;
}

CurvedPoint random_point(const SpaceSpec& spec, Engine& rng, double scale = 1.0, double max_angle = 2.5) {
  const CurvedPoint pole = north_pole(spec);
  Vec v = Vec::Zero(spec.ambient_dim());
  v.tail(spec.dim()) = gaussian(spec.dim(), rng, scale);
  return exp_map(pole, TangentVector::unchecked(pole, capped(v, spec, max_angle)), spec);
}

TangentVector random_tangent(const SpaceSpec& spec, const CurvedPoint& x, Engine& rng, double scale = 1.0) {
  const TangentVector t = project_to_tangent(x, gaussian(spec.ambient_dim(), rng, scale), spec);
  return TangentVector::unchecked(x, capped(t.vec(), spec, 2.5));
}

// Riemannian gradient descent on f(c) = sum_i w_i (2/kappa - 2 <c, x_i>),
// started from the heaviest point. Along a unit geodesic f'' is
// 2 |kappa| |<c, S>| with S = sum_i w_i x_i, which sets the step.
CurvedPoint descent_midpoint(std::span<const WeightedPoint> points, const SpaceSpec& spec) {
  Vec s = Vec::Zero(spec.ambient_dim());
  for (const auto& p : points) s += p.weight * p.point.coords();
  const auto heaviest =
      std::max_element(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.weight < b.weight; });
  CurvedPoint c = heaviest->point;
  for (int it = 0; it < 100000; ++it) {
    const double cs = curvature_inner(c.coords(), s, spec);
    const TangentVector grad = project_to_tangent(c, -2.0 * s, spec);
    const double norm = std::sqrt(std::max(0.0, curvature_inner(grad.vec(), grad.vec(), spec)));
    if (norm < 1e-13 * std::max(1.0, s.norm())) break;
    const double step = 0.5 / (2.0 * std::abs(spec.curvature()) * std::abs(cs));
    c = exp_map(c, TangentVector::unchecked(c, -step * grad.vec()), spec);
    c = CurvedPoint::unchecked(c.coords() / std::sqrt(std::abs(spec.curvature() * curvature_inner(c.coords(), c.coords(), spec))));
  }
  return c;
}

}  // namespace

SuiteResult check_manifold_linear(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"manifold_linear quadric residual", 0, 0, 0.0, 1e-9, 0.0};
  Engine rng(derive_seed(options.seed, {1}));
  const double kappas[] = {-2.0, -1.0, -0.5, 1.0, 2.0};
  const std::pair<int, int> shapes[] = {{4, 4}, {4, 7}, {7, 4}};
  const std::size_t n = scaled(1000, options);
  for (std::size_t i = 0; i < n; ++i) {
    const double kappa = kappas[i % 5];
    const auto [din, dout] = shapes[(i / 5) % 3];
    const SpaceSpec in(din, kappa), out(dout, kappa);
    const CurvedPoint x = random_point(in, rng);
    Mat w(dout, din);
    for (Eigen::Index a = 0; a < w.size(); ++a) w.data()[a] = standard_normal(rng);
    const CurvedPoint y = manifold_linear(x, LinearMapParams{w}, out);
    record(r, manifold_residual(y.coords(), out));
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_midpoint(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"geometric_midpoint vs gradient descent (geodesic distance)", 0, 0, 0.0, 1e-3, 0.0};
  Engine rng(derive_seed(options.seed, {2}));
  const std::size_t n = scaled(100, options);
  for (double sign : {-1.0, 1.0}) {
    for (std::size_t i = 0; i < n; ++i) {
      const SpaceSpec spec(2 + static_cast<int>(i % 4), sign * (0.5 + 0.5 * static_cast<double>(i % 3)));
      const int m = 1 + static_cast<int>(uniform_below(rng, 5));
      std::vector<WeightedPoint> points;
      // On the sphere the points stay in a cap so the weighted sum is far from zero.
      for (int j = 0; j < m; ++j) points.push_back({random_point(spec, rng, 0.7, 1.2), 0.1 + uniform_unit(rng)});
      const CurvedPoint got = geometric_midpoint(points, spec);
      const CurvedPoint want = descent_midpoint(points, spec);
      record(r, geodesic_distance(got, want, spec));
    }
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_exp_log(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"exp/log round trip", 0, 0, 0.0, 1e-5, 0.0};
  Engine rng(derive_seed(options.seed, {3}));
  const std::size_t n = scaled(10000, options);
  for (std::size_t i = 0; i < n; ++i) {
    const SpaceSpec spec(2 + static_cast<int>(i % 6), kCurvatures[i % 6]);
    const CurvedPoint x = random_point(spec, rng);
    const TangentVector tv = random_tangent(spec, x, rng);
    const Vec& v = tv.vec();
    const TangentVector back = log_map(x, exp_map(x, tv, spec), spec);
    record(r, (back.vec() - v).cwiseAbs().maxCoeff());
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_transport(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"parallel transport isometry and tangency", 0, 0, 0.0, 1e-8, 0.0};
  Engine rng(derive_seed(options.seed, {4}));
  const std::size_t n = scaled(10000, options);
  for (std::size_t i = 0; i < n; ++i) {
    const SpaceSpec spec(2 + static_cast<int>(i % 6), kCurvatures[i % 6]);
    const CurvedPoint x = random_point(spec, rng);
    const CurvedPoint y = random_point(spec, rng);
    const TangentVector v = random_tangent(spec, x, rng);
    const TangentVector w = random_tangent(spec, x, rng);
    const TangentVector pv = parallel_transport(x, y, v, spec);
    const TangentVector pw = parallel_transport(x, y, w, spec);
    const double isometry =
        std::abs(curvature_inner(pv.vec(), pw.vec(), spec) - curvature_inner(v.vec(), w.vec(), spec));
    record(r, std::max(isometry, tangency_residual(y.coords(), pv.vec(), spec)));
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_distance_symmetry(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"distance symmetry", 0, 0, 0.0, 1e-9, 0.0};
  Engine rng(derive_seed(options.seed, {5}));
  const std::size_t n = scaled(10000, options);
  for (std::size_t i = 0; i < n; ++i) {
    const SpaceSpec spec(2 + static_cast<int>(i % 6), kCurvatures[i % 6]);
    const CurvedPoint x = random_point(spec, rng);
    const CurvedPoint y = random_point(spec, rng);
    record(r, std::abs(geodesic_distance(x, y, spec) - geodesic_distance(y, x, spec)));
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_bundle_convolution(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"bundle convolution closed form vs per-source transport", 0, 0, 0.0, 1e-10, 0.0};
  Engine rng(derive_seed(options.seed, {6}));
  const std::size_t n = scaled(1000, options);
  for (std::size_t i = 0; i < n; ++i) {
    const SpaceSpec spec(2 + static_cast<int>(i % 6), kCurvatures[i % 6]);
    const CurvedPoint target = random_point(spec, rng, 0.7);
    const int m = 1 + static_cast<int>(uniform_below(rng, 6));
    std::vector<TangentVector> sources;
    std::vector<double> weights;
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      const CurvedPoint p = random_point(spec, rng, 0.7);
      sources.push_back(random_tangent(spec, p, rng));
      weights.push_back(uniform_unit(rng) + 0.05);
      total += weights.back();
    }
    for (double& w : weights) w /= total;
    Vec explicit_sum = Vec::Zero(spec.ambient_dim());
    for (int j = 0; j < m; ++j) {
      explicit_sum += weights[j] * parallel_transport(sources[j].base(), target, sources[j], spec).vec();
    }
    const TangentVector closed = bundle_convolution(sources, weights, target, spec);
    record(r, (closed.vec() - explicit_sum).cwiseAbs().maxCoeff());
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_unidirectionality(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"tree root perturbation leaves descendants unchanged", 0, 0, 0.0, 0.0, 0.0};
  Engine rng(derive_seed(options.seed, {7}));
  // Depth-2 tree: 0 -> {1, 2}, 1 -> {3, 4}, 2 -> {5}.
  const std::vector<Edge> edges{{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 5}};
  Substructure tree;
  tree.kind = SubstructureKind::tree;
  tree.anchor = 0;
  tree.nodes = {0, 1, 2, 3, 4, 5};
  tree.edges = edges;
  tree.parents = {-1, 0, 0, 1, 1, 2};
  tree.levels = {0, 1, 1, 2, 2, 2};
  const std::size_t n = scaled(20, options);
  for (std::size_t i = 0; i < n; ++i) {
    const SpaceSpec h(4, -1.0), s(4, 1.0);
    BundleState state{h, s, {Mat(6, 5), Mat(6, 5)}, {Mat(6, 5), Mat(6, 5)}};
    for (Factor f : {Factor::tree, Factor::cycle}) {
      for (int v = 0; v < 6; ++v) {
        const CurvedPoint p = random_point(state.spec(f), rng);
        state.factor(f).coords.row(v) = p.coords().transpose();
        state.factor(f).encodings.row(v) = random_tangent(state.spec(f), p, rng).vec().transpose();
      }
    }
    const LayerParams params = LayerParams::random(h, s, 8, rng);
    BundleState moved = state;
    const CurvedPoint root = random_point(h, rng);
    moved.tree.coords.row(0) = root.coords().transpose();
    moved.tree.encodings.row(0) = random_tangent(h, root, rng).vec().transpose();

    const std::vector<Substructure> trees{tree};
    const CoordinateUpdate a = cross_geometry_attention(tree, state, params, Factor::tree);
    const CoordinateUpdate b = cross_geometry_attention(tree, moved, params, Factor::tree);
    const BundleState la = layer_forward(state, trees, {}, params);
    const BundleState lb = layer_forward(moved, trees, {}, params);
    double changed = 0.0;
    for (int v = 1; v < 6; ++v) {
      if (a.coords[v].coords() != b.coords[v].coords()) changed = 1.0;
      if (la.tree.coords.row(v) != lb.tree.coords.row(v)) changed = 1.0;
    }
    // The root itself must see the perturbation, or the check is vacuous.
    if (a.coords[0].coords() == b.coords[0].coords()) changed = 1.0;
    record(r, changed);
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult check_gradients(const SelfcheckOptions& options) {
  Timer timer;
  SuiteResult r{"full-model loss gradient vs central differences", 0, 0, 0.0, 1e-4, 0.0};
  // Triangle 0-1-2 with a square 2-3-4-5 hanging off node 2.
  const Graph g = Graph::from_edges(6, std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 2}});
  const ModelConfig config{SpaceSpec(4, -1.0), SpaceSpec(4, 1.0), 2, 16};
  const BundleState init = init_state(g, InitConfig{}, config.tree_spec, config.cycle_spec);
  const std::vector<int> nodes{0, 1, 2, 3, 4, 5};
  const auto trees = sample_trees(g, nodes, TreeSampling{}, options.seed);
  const auto cycles = sample_cycles(g, nodes, 3, options.seed);
  const ModelParams params = ModelParams::random(config, options.seed);
  auto build = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
    const TapeState out = forward_tape(tape, init, bind_layer_vars(leaves), trees, cycles);
    return contrastive_objective(tape, out, config.tree_spec, config.cycle_spec, nodes, 1.0);
  };
  ad::GradCheckOptions gc;
  gc.tolerance = r.tolerance;
  const ad::GradCheckReport report = ad::grad_check(build, params.flatten(), gc);
  r.cases = report.checked;
  r.failures = report.failures.size();
  r.worst = report.max_rel_error;
  r.seconds = timer.seconds();
  return r;
}

std::vector<SuiteResult> run_selfcheck(const SelfcheckOptions& options) {
  return {check_manifold_linear(options),   check_midpoint(options),         check_exp_log(options),
          check_transport(options),         check_distance_symmetry(options), check_bundle_convolution(options),
          check_unidirectionality(options), check_gradients(options)};
}

}  // namespace rgfm
