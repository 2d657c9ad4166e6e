#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "rgfm/errors.hpp"
#include "rgfm/pretrain.hpp"
#include "support.hpp"

using namespace rgfm;

namespace {

std::filesystem::path temp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rgfm_test_pretrain_" + name);
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.tree_spec = SpaceSpec(4, -1.0);
  c.model.cycle_spec = SpaceSpec(4, 1.0);
  c.model.hidden = 8;
  c.epochs = 3;
  c.batch_size = 3;
  c.seed = 11;
  return c;
}

// Every node at the pole with a chosen space part in both factors.
BundleState pole_state(const Mat& h, const Mat& s) {
  const int n = static_cast<int>(h.rows()), d = static_cast<int>(h.cols());
  BundleState st{SpaceSpec(d, -1.0), SpaceSpec(d, 1.0), {Mat::Zero(n, d + 1), Mat::Zero(n, d + 1)},
                 {Mat::Zero(n, d + 1), Mat::Zero(n, d + 1)}};
  st.tree.coords.col(0).setOnes();
  st.cycle.coords.col(0).setOnes();
  st.tree.encodings.rightCols(d) = h;
  st.cycle.encodings.rightCols(d) = s;
  return st;
}

// Double loop over the defining sums, no stabilization.
double naive_loss(const Mat& h, const Mat& s, double tau) {
  const int n = static_cast<int>(h.rows());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (int j = 0; j < n; ++j) {
      row += std::exp(h.row(i).dot(s.row(j)) / tau);
      col += std::exp(s.row(i).dot(h.row(j)) / tau);
    }
    const double pos = std::exp(h.row(i).dot(s.row(i)) / tau);
    total += -std::log(pos / row) - std::log(pos / col);
  }
  return total;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("contrastive loss hand cases") {
  Mat one(1, 2);
  one << 0.3, -0.7;
  const int first[] = {0};
  CHECK(contrastive_loss(pole_state(one, one * 2.0), first, 1.0) == 0.0);
  const Mat same = Mat::Constant(2, 3, 0.4);
  const int both[] = {0, 1};
  CHECK(contrastive_loss(pole_state(same, same), both, 1.0) == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(contrastive_loss(pole_state(same, same), std::span<const int>{}, 1.0), ArgumentError);
  CHECK_THROWS_AS(contrastive_loss(pole_state(same, same), both, 0.0), ArgumentError);
}

TEST_CASE("contrastive loss matches a naive evaluation") {
  Engine rng(1);
  for (double tau : {1.0, 0.5}) {
    const Mat h = test::random_matrix(5, 3, rng), s = test::random_matrix(5, 3, rng);
    const int nodes[] = {0, 1, 2, 3, 4};
    const double got = contrastive_loss(pole_state(h, s), nodes, tau);
    CHECK(std::abs(got - naive_loss(h, s, tau)) <= 1e-10);
    CHECK(got >= 0.0);
    const int some[] = {4, 1};
    Mat h2(2, 3), s2(2, 3);
    h2 << h.row(4), h.row(1);
    s2 << s.row(4), s.row(1);
    CHECK(std::abs(contrastive_loss(pole_state(h, s), some, tau) - naive_loss(h2, s2, tau)) <= 1e-12);
  }
}

TEST_CASE("contrastive loss transports off-pole encodings to the pole") {
  Engine rng(2);
  const SpaceSpec h(3, -1.0), s(3, 1.0);
  BundleState st{h, s, {Mat(4, 4), Mat(4, 4)}, {Mat(4, 4), Mat(4, 4)}};
  Mat hp(4, 3), sp(4, 3);
  for (Factor f : {Factor::tree, Factor::cycle}) {
    const SpaceSpec& spec = st.spec(f);
    for (int i = 0; i < 4; ++i) {
      const Vec x = test::random_point(spec, rng, 0.5);
      const Vec z = test::random_tangent(spec, x, rng);
      st.factor(f).coords.row(i) = x.transpose();
      st.factor(f).encodings.row(i) = z.transpose();
      // Closed-form transport to the pole along the geodesic.
      const Vec o = north_pole(spec).coords();
      const double k = spec.curvature();
      const double a = spec.sign() * x[0] * o[0];
      const double inner = k * (spec.sign() * z[0] * o[0]);
      const Vec moved = z - (inner / (1.0 + k * a)) * (x + o);
      (f == Factor::tree ? hp : sp).row(i) = moved.tail(3).transpose();
    }
  }
  const int nodes[] = {0, 1, 2, 3};
  CHECK(std::abs(contrastive_loss(st, nodes, 1.0) - naive_loss(hp, sp, 1.0)) <= 1e-10);
}

TEST_CASE("Adam steps") {
  std::vector<Mat> params{Mat::Constant(2, 2, 1.5)};
  const std::vector<Mat> zero{Mat::Zero(2, 2)};
  AdamState state;
  const Adam adam;
  adam.step(params, zero, state);
  CHECK(params[0] == Mat::Constant(2, 2, 1.5));
  CHECK(state.step == 1);
  // The first bias-corrected step moves each entry by lr * g / (|g| + eps).
  std::vector<Mat> p{(Mat(1, 2) << 0.0, 1.0).finished()};
  AdamState fresh;
  adam.step(p, {(Mat(1, 2) << 3.0, -0.5).finished()}, fresh);
  CHECK(p[0](0, 0) == doctest::Approx(-0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(p[0](0, 1) == doctest::Approx(1.0 + 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK_THROWS_AS(adam.step(p, {}, fresh), DimensionError);
}

TEST_CASE("config validation") {
  TrainConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = small_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = small_config();
  c.temperature = -1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = small_config();
  c.trees.samples_per_anchor = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = small_config();
  c.seed = std::uint64_t{1} << 53;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("zero epochs returns the initial checkpoint and an empty trace") {
  TrainConfig c = small_config();
  c.epochs = 0;
  const TrainResult r = train(test::toy6(), c);
  CHECK(r.loss_trace.empty());
  CHECK(r.checkpoint.params.flatten() == initial_checkpoint(c).params.flatten());
  CHECK(r.checkpoint.epochs_done == 0);
}

TEST_CASE("training is deterministic and moves the parameters") {
  const TrainConfig c = small_config();
  const TrainResult a = train(test::toy6(), c);
  const TrainResult b = train(test::toy6(), c);
  REQUIRE(a.loss_trace.size() == 3);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.checkpoint.params.flatten() == b.checkpoint.params.flatten());
  CHECK(a.checkpoint.params.flatten() != initial_checkpoint(c).params.flatten());
  for (double l : a.loss_trace) CHECK((std::isfinite(l) && l >= 0.0));
  CHECK(a.checkpoint.epochs_done == 3);
  TrainConfig other = c;
  other.seed = 12;
  CHECK(train(test::toy6(), other).loss_trace != a.loss_trace);
}

TEST_CASE("checkpoint round trip and corrupt files") {
  const TrainResult r = train(test::toy6(), small_config());
  const auto path = temp("ckpt.bin");
  save_checkpoint(path, r.checkpoint);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params.flatten() == r.checkpoint.params.flatten());
  CHECK(back.adam.m == r.checkpoint.adam.m);
  CHECK(back.adam.v == r.checkpoint.adam.v);
  CHECK(back.adam.step == r.checkpoint.adam.step);
  CHECK(back.seed == r.checkpoint.seed);
  CHECK(back.epochs_done == r.checkpoint.epochs_done);
  CHECK(back.model.layers == r.checkpoint.model.layers);
  CHECK(back.model.tree_spec.curvature() == -1.0);
  const auto again = temp("ckpt2.bin");
  save_checkpoint(again, back);
  const std::string bytes = slurp(path);
  CHECK(slurp(again) == bytes);

  const auto write = [](const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
  };
  std::string bad = bytes;
  bad[0] = 'X';
  write(temp("magic.bin"), bad);
  CHECK_THROWS_AS(load_checkpoint(temp("magic.bin")), FormatError);
  bad = bytes;
  bad[4] = 2;
  write(temp("version.bin"), bad);
  CHECK_THROWS_AS(load_checkpoint(temp("version.bin")), FormatError);
  write(temp("short.bin"), bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(temp("short.bin")), FormatError);
  write(temp("long.bin"), bytes + "extra");
  CHECK_THROWS_AS(load_checkpoint(temp("long.bin")), FormatError);
  CHECK_THROWS_AS(load_checkpoint(temp("missing.bin")), MissingFileError);
}

TEST_CASE("embeddings have the documented shape and transfer across graphs") {
  const TrainResult r = train(test::toy6(), small_config());
  const Mat e = embed(test::toy6(), r.checkpoint, EmbedConfig{});
  CHECK(e.rows() == 6);
  CHECK(e.cols() == 8);
  CHECK(e.allFinite());
  CHECK(embed(test::toy6(), r.checkpoint, EmbedConfig{}) == e);
  const Mat fresh = embed(test::toy6(), initial_checkpoint(small_config()), EmbedConfig{});
  CHECK(fresh.allFinite());
  const Graph other = test::make_graph(9, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 4}, {7, 8}});
  const Mat t = embed(other, r.checkpoint, EmbedConfig{});
  CHECK(t.rows() == 9);
  CHECK(t.allFinite());
}

TEST_CASE("relabeling nodes permutes the forward pass") {
  const Graph g = test::toy6();
  const std::vector<int> perm{3, 5, 0, 1, 4, 2};  // old id -> new id

  const TrainConfig c = small_config();
  BundleState state = init_state(g, c.init, c.model.tree_spec, c.model.cycle_spec);
  BundleState pstate = state;
  for (Factor f : {Factor::tree, Factor::cycle}) {
    for (int v = 0; v < 6; ++v) {
      pstate.factor(f).coords.row(perm[v]) = state.factor(f).coords.row(v);
      pstate.factor(f).encodings.row(perm[v]) = state.factor(f).encodings.row(v);
    }
  }
  const std::vector<int> anchors{0, 1, 2, 3, 4, 5};
  const auto trees = sample_trees(g, anchors, {}, 5);
  const auto cycles = sample_cycles(g, anchors, 3, 5);
  const auto relabel = [&](std::vector<Substructure> subs) {
    for (auto& s : subs) {
      s.anchor = perm[s.anchor];
      for (int& v : s.nodes) v = perm[v];
      for (auto& [a, b] : s.edges) a = perm[a], b = perm[b];
    }
    return subs;
  };
  const ModelParams params = ModelParams::random(c.model, 9);
  const BundleState out = forward_reference(state, params, trees, cycles);
  const BundleState pout = forward_reference(pstate, params, relabel(trees), relabel(cycles));
  for (Factor f : {Factor::tree, Factor::cycle}) {
    for (int v = 0; v < 6; ++v) {
      CHECK(pout.factor(f).coords.row(perm[v]) == out.factor(f).coords.row(v));
      CHECK(pout.factor(f).encodings.row(perm[v]) == out.factor(f).encodings.row(v));
    }
  }
}
