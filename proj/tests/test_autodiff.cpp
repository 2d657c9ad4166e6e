#include <doctest.h>

#include <cmath>
#include <memory>

#include "rgfm/autodiff.hpp"
#include "rgfm/layer.hpp"
#include "support.hpp"

using namespace rgfm;
using test::random_matrix;
using test::random_point;
using test::random_tangent;

namespace {

Mat points_matrix(const SpaceSpec& spec, int n, Engine& rng, double scale = 1.0) {
  Mat m(n, spec.ambient_dim());
  for (int i = 0; i < n; ++i) m.row(i) = random_point(spec, rng, scale).transpose();
  return m;
}

Mat tangents_matrix(const SpaceSpec& spec, const Mat& points, Engine& rng, double scale = 1.0) {
  Mat m(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    m.row(i) = random_tangent(spec, points.row(i).transpose(), rng, scale).transpose();
  }
  return m;
}

std::shared_ptr<const ad::PairIndex> pairs_of(const std::vector<std::vector<int>>& groups) {
  auto p = std::make_shared<ad::PairIndex>();
  for (const auto& g : groups) {
    p->open_segment();
    for (int s : g) p->add(s);
  }
  return p;
}

void require_grad_check(const ad::ScalarBuilder& f, const std::vector<Mat>& leaves, double tol = 1e-4) {
  ad::GradCheckOptions options;
  options.tolerance = tol;
  const auto report = ad::grad_check(f, leaves, options);
  INFO("max relative error " << report.max_rel_error << " over " << report.checked << " entries");
  CHECK(report.checked > 0);
  CHECK(report.passed());
}

}  // namespace

TEST_CASE("quadratic gradient") {
  ad::Tape tape;
  const ad::Var w = tape.param((Mat(2, 1) << 1, 2).finished());
  const auto grads = ad::backward(tape, ad::dot(tape, w, w));
  CHECK(grads[0](0, 0) == 2.0);
  CHECK(grads[0](1, 0) == 4.0);
}

TEST_CASE("a leaf the loss ignores gets a zero gradient") {
  ad::Tape tape;
  const ad::Var a = tape.param(Mat::Ones(2, 2));
  const ad::Var b = tape.param(Mat::Ones(3, 1));
  const auto grads = ad::backward(tape, ad::sum(tape, a));
  CHECK(grads[0] == Mat::Ones(2, 2));
  CHECK(grads[1] == Mat::Zero(3, 1));
}

TEST_CASE("tape contracts") {
  ad::Tape tape;
  const ad::Var a = tape.param(Mat::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(a), ContractError);
  CHECK_THROWS_AS(tape.constant(Mat::Constant(1, 1, NAN)), NumericError);
  CHECK_THROWS_AS(ad::matmul(tape, a, tape.constant(Mat::Ones(3, 1))), DimensionError);
  CHECK_THROWS(tape.value(ad::Var{42}));
}

TEST_CASE("linear functions match central differences to round-off") {
  Engine rng(1);
  const Mat c = random_matrix(3, 4, rng);
  require_grad_check(
      [&](ad::Tape& t, std::span<const ad::Var> v) { return ad::dot(t, v[0], t.constant(c)); },
      {random_matrix(3, 4, rng)}, 1e-7);
}

TEST_CASE("gradient of a sum is the sum of gradients") {
  Engine rng(2);
  const Mat x0 = random_matrix(4, 3, rng);
  const Mat y0 = random_matrix(3, 2, rng);
  auto f = [&](ad::Tape& t, ad::Var x, ad::Var y) { return ad::sum(t, ad::matmul(t, x, y)); };
  auto g = [&](ad::Tape& t, ad::Var x) { return ad::dot(t, x, x); };
  ad::Tape t1;
  ad::Var x1 = t1.param(x0), y1 = t1.param(y0);
  const auto gf = ad::backward(t1, f(t1, x1, y1));
  ad::Tape t2;
  ad::Var x2 = t2.param(x0);
  t2.param(y0);
  const auto gg = ad::backward(t2, g(t2, x2));
  ad::Tape t3;
  ad::Var x3 = t3.param(x0), y3 = t3.param(y0);
  const auto gs = ad::backward(t3, ad::add(t3, f(t3, x3, y3), g(t3, x3)));
  CHECK((gs[0] - gf[0] - gg[0]).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((gs[1] - gf[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generic ops pass the gradient check") {
  Engine rng(3);
  const std::vector<Mat> leaves{random_matrix(4, 3, rng), random_matrix(3, 5, rng), random_matrix(2, 5, rng)};
  require_grad_check(
      [&](ad::Tape& t, std::span<const ad::Var> v) {
        const ad::Var ab = ad::matmul(t, v[0], v[1]);                   // 4 x 5
        const ad::Var abt = ad::matmul_nt(t, ab, v[2]);                  // 4 x 2
        const ad::Var g = ad::gather_rows(t, ab, {3, 0, 3});             // 3 x 5
        const ad::Var r = ad::replace_rows(t, ab, {1, 2}, ad::gather_rows(t, ad::mul(t, g, g), {0, 2}));
        const ad::Var s = ad::sub(t, ad::scale(t, ad::sum(t, abt), 0.3), ad::sum(t, ad::slice_cols(t, g, 1, 2)));
        return ad::add(t, s, ad::dot(t, r, r));
      },
      leaves);
}

TEST_CASE("geometric ops agree with the geometry library") {
  Engine rng(4);
  for (double k : {-1.0, 0.8, 0.0}) {
    const SpaceSpec in(3, k), out(4, k);
    const Mat x = points_matrix(in, 5, rng);
    const Mat v = tangents_matrix(in, x, rng, 0.5);
    const Mat w = random_matrix(4, 3, rng);
    ad::Tape tape;
    const ad::Var xv = tape.constant(x), vv = tape.constant(v);
    const Mat lin = tape.value(ad::manifold_linear(tape, xv, tape.constant(w), k));
    const Mat ex = tape.value(ad::exp_map(tape, xv, vv, k));
    const Mat y = points_matrix(in, 5, rng);
    const Mat dist = tape.value(ad::distance(tape, xv, tape.constant(y), k));
    const Mat inner = tape.value(ad::inner_rows(tape, xv, tape.constant(y), k));
    for (int i = 0; i < 5; ++i) {
      const CurvedPoint p = CurvedPoint::unchecked(x.row(i).transpose());
      const CurvedPoint q = CurvedPoint::unchecked(y.row(i).transpose());
      const Vec want_lin = rgfm::manifold_linear(p, {w}, out).coords();
      CHECK((lin.row(i).transpose() - want_lin).cwiseAbs().maxCoeff() <= 1e-12);
      const Vec want_exp = rgfm::exp_map(p, TangentVector::unchecked(p, v.row(i).transpose()), in).coords();
      CHECK((ex.row(i).transpose() - want_exp).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(dist(i, 0) == doctest::Approx(geodesic_distance(p, q, in)).epsilon(1e-12));
      CHECK(inner(i, 0) == doctest::Approx(curvature_inner(p.coords(), q.coords(), in)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bundle_conv agrees with per-source transport") {
  Engine rng(5);
  for (double k : {-1.0, 1.0}) {
    const SpaceSpec spec(3, k);
    const Mat ps = points_matrix(spec, 4, rng, 0.6);
    const Mat zs = tangents_matrix(spec, ps, rng);
    const Mat pt = points_matrix(spec, 2, rng, 0.6);
    const auto pairs = pairs_of({{0, 1, 3}, {2, 3}});
    const Mat w = (Mat(5, 1) << 0.2, 0.5, 0.3, 0.9, 0.1).finished();
    ad::Tape tape;
    const Mat out = tape.value(ad::bundle_conv(tape, tape.constant(ps), tape.constant(zs), tape.constant(pt),
                                               tape.constant(w), pairs, k));
    for (int target = 0; target < 2; ++target) {
      const CurvedPoint dst = CurvedPoint::unchecked(pt.row(target).transpose());
      Vec want = Vec::Zero(4);
      for (int p = pairs->offsets[target]; p < pairs->offsets[target + 1]; ++p) {
        const int s = pairs->source[p];
        const CurvedPoint src = CurvedPoint::unchecked(ps.row(s).transpose());
        want += w(p, 0) * parallel_transport(src, dst, TangentVector::unchecked(src, zs.row(s).transpose()), spec).vec();
      }
      CHECK((out.row(target).transpose() - want).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("pair_scores agrees with the scalar map") {
  Engine rng(6);
  const LayerParams params = LayerParams::random(SpaceSpec(3, -1.0), SpaceSpec(3, 1.0), 8, rng);
  const ScalarMap& phi = params.tree.phi;
  const Mat q = random_matrix(3, 4, rng);
  const Mat k = random_matrix(4, 4, rng);
  auto qr = std::make_shared<const std::vector<int>>(std::vector<int>{0, 0, 2, 1});
  auto kr = std::make_shared<const std::vector<int>>(std::vector<int>{1, 3, 0, 2});
  ad::Tape tape;
  const ad::PhiVars vars{tape.constant(phi.hidden_weight), tape.constant(phi.hidden_bias),
                         tape.constant(phi.out_weight), tape.constant(Mat::Constant(1, 1, phi.out_bias))};
  const Mat s = tape.value(ad::pair_scores(tape, tape.constant(q), tape.constant(k), qr, kr, vars, {}));
  for (int p = 0; p < 4; ++p) {
    CHECK(s(p, 0) == doctest::Approx(phi(q.row((*qr)[p]).transpose(), k.row((*kr)[p]).transpose())).epsilon(1e-12));
  }
}

TEST_CASE("pair_scores dropout is unbiased and thread independent") {
  Engine rng(7);
  const int hidden = 64;
  const Mat q = random_matrix(50, 3, rng);
  const Mat k = random_matrix(50, 3, rng);
  std::vector<int> rows(50);
  for (int i = 0; i < 50; ++i) rows[i] = i;
  auto idx = std::make_shared<const std::vector<int>>(rows);
  const Mat a = random_matrix(hidden, 6, rng), b1 = random_matrix(hidden, 1, rng), w2 = random_matrix(hidden, 1, rng);
  auto run = [&](int threads, ad::Dropout d) {
    ad::Tape tape(threads);
    const ad::PhiVars vars{tape.constant(a), tape.constant(b1), tape.constant(w2), tape.constant(Mat::Zero(1, 1))};
    return Mat(tape.value(ad::pair_scores(tape, tape.constant(q), tape.constant(k), idx, idx, vars, d)));
  };
  const Mat plain = run(1, {});
  Mat mean = Mat::Zero(50, 1);
  const int draws = 400;
  for (int s = 0; s < draws; ++s) mean += run(1, {0.1, static_cast<std::uint64_t>(s)});
  mean /= draws;
  // Per-unit variance of a 0.1 dropout mask bounds the spread of the mean.
  CHECK((mean - plain).cwiseAbs().maxCoeff() <= 5.0 * std::sqrt(0.1 / 0.9 / draws) * w2.norm() + 1e-12);
  CHECK(run(1, {0.1, 9}) == run(3, {0.1, 9}));
  CHECK(run(1, {0.1, 9}) != run(1, {0.1, 10}));
}

TEST_CASE("geometric ops pass the gradient check") {
  Engine rng(8);
  for (double k : {-1.0, 1.0, 0.0}) {
    CAPTURE(k);
    const SpaceSpec in(3, k);
    const Mat x = points_matrix(in, 4, rng, 0.6);
    const Mat v = tangents_matrix(in, x, rng, 0.4);
    const Mat y = points_matrix(in, 4, rng, 0.6);
    const Mat w = random_matrix(3, 3, rng);
    require_grad_check(
        [&](ad::Tape& t, std::span<const ad::Var> p) {
          // x moves freely; project it back so every op sees valid inputs.
          const ad::Var xs = ad::manifold_linear(t, p[0], t.constant(Mat::Identity(3, 3)), k);
          const ad::Var lin = ad::manifold_linear(t, xs, p[1], k);
          const ad::Var tan = ad::project_tangent(t, xs, p[2], k);
          const ad::Var ex = ad::exp_map(t, xs, tan, k);
          const ad::Var d = ad::distance(t, ex, t.constant(y), k);
          const ad::Var in_rows = ad::inner_rows(t, lin, ex, k);
          return ad::add(t, ad::sum(t, d), ad::scale(t, ad::sum(t, in_rows), 0.1));
        },
        {x, w, v});
  }
}

TEST_CASE("aggregation ops pass the gradient check") {
  Engine rng(9);
  for (double k : {-1.0, 1.0}) {
    CAPTURE(k);
    const SpaceSpec spec(3, k);
    const Mat ps = points_matrix(spec, 4, rng, 0.6);
    const Mat zs = tangents_matrix(spec, ps, rng);
    const Mat pt = points_matrix(spec, 2, rng, 0.6);
    const auto pairs = pairs_of({{0, 1, 3}, {2, 3}});
    auto uniform = std::make_shared<const std::vector<char>>(std::vector<char>{0, 0});
    const Mat scores = random_matrix(5, 1, rng);
    require_grad_check(
        [&](ad::Tape& t, std::span<const ad::Var> p) {
          const ad::Var w = ad::segment_softmax(t, p[0], pairs, uniform);
          const ad::Var sums = ad::segment_weighted_sum(t, p[1], w, pairs);
          const ad::Var mid = ad::midpoint_normalize(t, sums, k);
          const ad::Var z = ad::project_tangent(t, p[1], p[2], k);
          const ad::Var bc = ad::bundle_conv(t, p[1], z, mid, w, pairs, k);
          return ad::add(t, ad::dot(t, bc, bc), ad::sum(t, mid));
        },
        {scores, ps, zs});
  }
}

TEST_CASE("pair_scores and contrastive pass the gradient check") {
  Engine rng(10);
  const Mat q = random_matrix(3, 4, rng), k = random_matrix(4, 4, rng);
  auto qr = std::make_shared<const std::vector<int>>(std::vector<int>{0, 0, 2, 1, 2});
  auto kr = std::make_shared<const std::vector<int>>(std::vector<int>{1, 3, 0, 2, 2});
  const std::vector<Mat> phi{random_matrix(6, 8, rng), random_matrix(6, 1, rng), random_matrix(6, 1, rng),
                             random_matrix(1, 1, rng)};
  for (double rate : {0.0, 0.3}) {
    require_grad_check(
        [&](ad::Tape& t, std::span<const ad::Var> p) {
          const ad::Var s = ad::pair_scores(t, p[0], p[1], qr, kr, {p[2], p[3], p[4], p[5]}, {rate, 3});
          return ad::dot(t, s, s);
        },
        {q, k, phi[0], phi[1], phi[2], phi[3]});
  }
  require_grad_check([&](ad::Tape& t, std::span<const ad::Var> p) { return ad::contrastive(t, p[0], p[1], 0.7); },
                     {random_matrix(4, 3, rng), random_matrix(4, 3, rng)});
}

TEST_CASE("distance gradient through exp is finite and correct") {
  Engine rng(11);
  const SpaceSpec h(3, -1.0);
  Mat v = Mat::Zero(1, 4);
  v.block(0, 1, 1, 3) = random_matrix(1, 3, rng, 0.5);
  const Mat o = north_pole(h).coords().transpose();
  require_grad_check(
      [&](ad::Tape& t, std::span<const ad::Var> p) {
        const ad::Var oc = t.constant(o);
        const ad::Var tangent = ad::project_tangent(t, oc, p[0], -1.0);
        return ad::sum(t, ad::distance(t, oc, ad::exp_map(t, oc, tangent, -1.0), -1.0));
      },
      {v});
  // At coincident points the clamp passes a zero gradient, never NaN.
  ad::Tape tape;
  const ad::Var x = tape.param(o);
  const auto g = ad::backward(tape, ad::sum(tape, ad::distance(tape, x, tape.constant(o), -1.0)));
  CHECK(g[0].allFinite());
}

TEST_CASE("replaying a tape gives bitwise identical values") {
  Engine rng(12);
  const SpaceSpec s(3, 1.0);
  const Mat x = points_matrix(s, 6, rng, 0.6);
  const Mat v = tangents_matrix(s, x, rng, 0.4);
  auto build = [&] {
    ad::Tape t(2);
    const ad::Var e = ad::exp_map(t, t.param(x), t.param(v), 1.0);
    return Mat(t.value(ad::contrastive(t, e, t.constant(x), 1.0)));
  };
  CHECK(build() == build());
}

TEST_CASE("contrastive loss on a small hand case") {
  ad::Tape tape;
  // Two identical rows in both views: every softmax is uniform over 2.
  const ad::Var u = tape.constant(Mat::Ones(2, 3));
  const double loss = tape.value(ad::contrastive(tape, u, u, 1.0))(0, 0);
  CHECK(loss == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
  const ad::Var one = tape.constant(Mat::Ones(1, 3));
  CHECK(tape.value(ad::contrastive(tape, one, one, 1.0))(0, 0) == 0.0);
}
