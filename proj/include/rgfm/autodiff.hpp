#pragma once

// Reverse-mode differentiation over the primitive set the model needs.
//
// Every value on the tape is a dense matrix; geometric ops work row-wise,
// one point or tangent vector per row in ambient coordinates. Trainable
// parameters are registered with Tape::param, everything else enters as a
// constant. Ops whose inputs are all constants record no backward closure.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rgfm/ccs.hpp"

namespace rgfm::ad {

struct Var {
  int id = -1;
};

/// Pairs (target, source) grouped by target: the pairs of target t occupy
/// [offsets[t], offsets[t+1]).
struct PairIndex {
  std::vector<int> target;
  std::vector<int> source;
  std::vector<int> offsets{0};

  /// Starts the segment of the next target.
  void open_segment() { offsets.push_back(offsets.back()); }
  void add(int source_row) {
    target.push_back(num_targets() - 1);
    source.push_back(source_row);
    ++offsets.back();
  }
  int num_targets() const { return static_cast<int>(offsets.size()) - 1; }
  std::size_t size() const { return source.size(); }
};

/// Weights of phi(q || k) = w2 . tanh(A [q; k] + b1) + b2.
struct PhiVars {
  Var hidden_weight;  // hidden x 2D
  Var hidden_bias;    // hidden x 1
  Var out_weight;     // hidden x 1
  Var out_bias;       // 1 x 1
};

/// Inverted dropout on phi's hidden units. Each unit draws 16 hash bits keyed
/// by (seed, pair, unit / 4), so masks are a pure function of the seed; the
/// drop probability is rate rounded up to a multiple of 2^-16.
struct Dropout {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

class Tape {
 public:
  using Backward = std::function<void(const Mat& out_grad, Tape& tape)>;

  explicit Tape(int threads = 1);

  Var constant(Mat value);
  Var param(Mat value);

  const Mat& value(Var v) const { return nodes_[check(v)].value; }
  /// Empty until backward reaches the node.
  const Mat& grad(Var v) const { return nodes_[check(v)].grad; }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }
  const std::string& op(Var v) const { return nodes_[check(v)].op; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Var>& params() const { return params_; }
  int threads() const { return threads_; }

  /// Records a node. The closure runs during backward only if some input
  /// requires a gradient. Throws NumericError if value is not finite.
  Var push(std::string op, Mat value, std::initializer_list<Var> inputs, Backward backward);

  /// Adds g to the gradient of v (no-op for constants).
  void accumulate(Var v, const Mat& g);
  /// Gradient buffer of v, zero-initialized on first use.
  Mat& grad_buffer(Var v);

  /// Seeds d loss / d loss = 1 and runs every closure in reverse order.
  /// Throws ContractError unless loss is 1 x 1.
  void backward(Var loss);

 private:
  struct Node {
    std::string op;
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::size_t check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Var> params_;
  int threads_;
};

/// Per-parameter gradients, in Tape::params order; shapes match exactly.
using GradientMap = std::vector<Mat>;

GradientMap backward(Tape& tape, Var loss);

// Generic ops.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var mul(Tape& t, Var a, Var b);        // elementwise
Var matmul(Tape& t, Var a, Var b);     // a b
Var matmul_nt(Tape& t, Var a, Var b);  // a b^T
Var sum(Tape& t, Var a);               // 1 x 1
Var dot(Tape& t, Var a, Var b);        // 1 x 1, sum of elementwise products
Var gather_rows(Tape& t, Var a, std::vector<int> rows);
/// base with rows[i] replaced by row i of values.
Var replace_rows(Tape& t, Var base, std::vector<int> rows, Var values);
Var slice_cols(Tape& t, Var a, int start, int count);

// Row-wise geometry. kappa = 0 is the Euclidean mode throughout.

/// <a_i, b_i>_kappa per row, n x 1.
Var inner_rows(Tape& t, Var a, Var b, double kappa);
/// Manifold-preserving linear map of every row of x; w is d_out x d_in.
Var manifold_linear(Tape& t, Var x, Var w, double kappa);
/// Normalizes weighted sums onto the quadric (positive sheet for kappa < 0).
Var midpoint_normalize(Tape& t, Var sums, double kappa);
/// out[target] = sum over its pairs of weights[p] * values[source[p]].
Var segment_weighted_sum(Tape& t, Var values, Var weights, std::shared_ptr<const PairIndex> pairs);
/// Softmax of a column of scores within each segment. Segments flagged
/// uniform get weight 1/size and pass no gradient.
Var segment_softmax(Tape& t, Var scores, std::shared_ptr<const PairIndex> pairs,
                    std::shared_ptr<const std::vector<char>> uniform);
/// phi(q[q_rows[p]] || k[k_rows[p]]) per pair, P x 1.
Var pair_scores(Tape& t, Var q, Var k, std::shared_ptr<const std::vector<int>> q_rows,
                std::shared_ptr<const std::vector<int>> k_rows, const PhiVars& phi, Dropout dropout);
/// out[target] = sum over pairs of w_p PT_{p_src[s] -> p_tgt[target]}(z_src[s]).
Var bundle_conv(Tape& t, Var p_src, Var z_src, Var p_tgt, Var weights,
                std::shared_ptr<const PairIndex> pairs, double kappa);
/// w_i - kappa <w_i, p_i> p_i per row.
Var project_tangent(Tape& t, Var p, Var w, double kappa);
/// Exponential map per row.
Var exp_map(Tape& t, Var x, Var v, double kappa);
/// Geodesic distance per row, n x 1.
Var distance(Tape& t, Var x, Var y, double kappa);
/// Both directions of the InfoNCE loss between rows of u and v with
/// similarity u_i . v_j / tau, summed over rows; 1 x 1.
Var contrastive(Tape& t, Var u, Var v, double tau);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  /// The default sits at the resolution of central differences with h = 1e-5
  /// on losses of order 10.
  double floor = 1e-5;
  /// Check at most this many entries per leaf (evenly strided); 0 = all.
  int max_entries_per_leaf = 0;
};

struct GradCheckFailure {
  int leaf;
  Eigen::Index row;
  Eigen::Index col;
  double analytic;
  double numeric;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckFailure> failures;
  bool passed() const { return failures.empty(); }
};

/// Builds a scalar from leaves registered as params, in order.
using ScalarBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Central differences against backward for every (or a strided subset of)
/// leaf entry.
GradCheckReport grad_check(const ScalarBuilder& f, const std::vector<Mat>& leaves,
                           const GradCheckOptions& options = {});

}  // namespace rgfm::ad
