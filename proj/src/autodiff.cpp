#include "rgfm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace rgfm::ad {

Tape::Tape(int threads) : threads_(std::max(1, threads)) {}

std::size_t Tape::check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError(fmt::format("variable {} is not on this tape", v.id));
  }
  return static_cast<std::size_t>(v.id);
}

Var Tape::constant(Mat value) { return push("constant", std::move(value), {}, nullptr); }

Var Tape::param(Mat value) {
  Var v = push("param", std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  params_.push_back(v);
  return v;
}

Var Tape::push(std::string op, Mat value, std::initializer_list<Var> inputs, Backward backward) {
  if (!value.allFinite()) throw NumericError(fmt::format("non-finite value produced by {}", op));
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (Var in : inputs) node.requires_grad = node.requires_grad || requires_grad(in);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_buffer(Var v) {
  Node& node = nodes_[check(v)];
  if (node.grad.size() == 0) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(Var v, const Mat& g) {
  if (!requires_grad(v)) return;
  grad_buffer(v) += g;
}

void Tape::backward(Var loss) {
  const Node& root = nodes_[check(loss)];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ContractError(fmt::format("backward needs a scalar, got a {}x{} value from {}",
                                    root.value.rows(), root.value.cols(), root.op));
  }
  for (Node& node : nodes_) node.grad.resize(0, 0);
  grad_buffer(loss)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward || node.grad.size() == 0) continue;
    // Closures only touch their inputs, which precede the node.
    node.backward(node.grad, *this);
  }
}

GradientMap backward(Tape& tape, Var loss) {
  tape.backward(loss);
  GradientMap out;
  for (Var p : tape.params()) {
    const Mat& g = tape.grad(p);
    out.push_back(g.size() == 0 ? Mat::Zero(tape.value(p).rows(), tape.value(p).cols()) : g);
  }
  return out;
}

namespace {

void require_same_shape(const Tape& t, Var a, Var b, const char* op) {
  const Mat& x = t.value(a);
  const Mat& y = t.value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError(
        fmt::format("{}: shapes {}x{} and {}x{} differ", op, x.rows(), x.cols(), y.rows(), y.cols()));
  }
}

void require_rows(const Mat& m, const std::vector<int>& rows, const char* op) {
  for (int r : rows) {
    if (r < 0 || r >= m.rows()) throw DimensionError(fmt::format("{}: row {} out of range", op, r));
  }
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "add");
  return t.push("add", t.value(a) + t.value(b), {a, b}, [a, b](const Mat& g, Tape& tape) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "sub");
  return t.push("sub", t.value(a) - t.value(b), {a, b}, [a, b](const Mat& g, Tape& tape) {
    tape.accumulate(a, g);
    tape.accumulate(b, -g);
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.push("scale", s * t.value(a), {a}, [a, s](const Mat& g, Tape& tape) { tape.accumulate(a, s * g); });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "mul");
  return t.push("mul", t.value(a).cwiseProduct(t.value(b)), {a, b}, [a, b](const Mat& g, Tape& tape) {
    tape.accumulate(a, g.cwiseProduct(tape.value(b)));
    tape.accumulate(b, g.cwiseProduct(tape.value(a)));
  });
}

Var matmul(Tape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).rows()) throw DimensionError("matmul: inner dimensions differ");
  return t.push("matmul", t.value(a) * t.value(b), {a, b}, [a, b](const Mat& g, Tape& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * tape.value(b).transpose());
    if (tape.requires_grad(b)) tape.accumulate(b, tape.value(a).transpose() * g);
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).cols()) throw DimensionError("matmul_nt: inner dimensions differ");
  return t.push("matmul_nt", t.value(a) * t.value(b).transpose(), {a, b}, [a, b](const Mat& g, Tape& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * tape.value(b));
    if (tape.requires_grad(b)) tape.accumulate(b, g.transpose() * tape.value(a));
  });
}

Var sum(Tape& t, Var a) {
  Mat out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.push("sum", std::move(out), {a}, [a](const Mat& g, Tape& tape) {
    const Mat& x = tape.value(a);
    tape.accumulate(a, Mat::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var dot(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "dot");
  Mat out(1, 1);
  out(0, 0) = t.value(a).cwiseProduct(t.value(b)).sum();
  return t.push("dot", std::move(out), {a, b}, [a, b](const Mat& g, Tape& tape) {
    tape.accumulate(a, g(0, 0) * tape.value(b));
    tape.accumulate(b, g(0, 0) * tape.value(a));
  });
}

Var gather_rows(Tape& t, Var a, std::vector<int> rows) {
  const Mat& x = t.value(a);
  require_rows(x, rows, "gather_rows");
  Mat out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return t.push("gather_rows", std::move(out), {a}, [a, rows = std::move(rows)](const Mat& g, Tape& tape) {
    Mat& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var replace_rows(Tape& t, Var base, std::vector<int> rows, Var values) {
  const Mat& b = t.value(base);
  const Mat& v = t.value(values);
  require_rows(b, rows, "replace_rows");
  if (v.rows() != static_cast<Eigen::Index>(rows.size()) || v.cols() != b.cols()) {
    throw DimensionError("replace_rows: replacement block has the wrong shape");
  }
  Mat out = b;
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = v.row(static_cast<Eigen::Index>(i));
  return t.push("replace_rows", std::move(out), {base, values},
                [base, values, rows = std::move(rows)](const Mat& g, Tape& tape) {
                  if (tape.requires_grad(values)) {
                    Mat& gv = tape.grad_buffer(values);
                    for (std::size_t i = 0; i < rows.size(); ++i) gv.row(static_cast<Eigen::Index>(i)) += g.row(rows[i]);
                  }
                  if (tape.requires_grad(base)) {
                    Mat gb = g;
                    for (int r : rows) gb.row(r).setZero();
                    tape.accumulate(base, gb);
                  }
                });
}

Var slice_cols(Tape& t, Var a, int start, int count) {
  const Mat& x = t.value(a);
  if (start < 0 || count < 0 || start + count > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  return t.push("slice_cols", x.middleCols(start, count), {a}, [a, start, count](const Mat& g, Tape& tape) {
    tape.grad_buffer(a).middleCols(start, count) += g;
  });
}

GradCheckReport grad_check(const ScalarBuilder& f, const std::vector<Mat>& leaves, const GradCheckOptions& options) {
  auto evaluate = [&](const std::vector<Mat>& values) {
    Tape tape;
    std::vector<Var> vars;
    for (const Mat& v : values) vars.push_back(tape.param(v));
    return tape.value(f(tape, vars))(0, 0);
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Mat& v : leaves) vars.push_back(tape.param(v));
  const GradientMap analytic = backward(tape, f(tape, vars));

  GradCheckReport report;
  std::vector<Mat> probe = leaves;
  for (std::size_t leaf = 0; leaf < leaves.size(); ++leaf) {
    const Eigen::Index n = leaves[leaf].size();
    Eigen::Index stride = 1;
    if (options.max_entries_per_leaf > 0 && n > options.max_entries_per_leaf) {
      stride = (n + options.max_entries_per_leaf - 1) / options.max_entries_per_leaf;
    }
    for (Eigen::Index idx = 0; idx < n; idx += stride) {
      const Eigen::Index row = idx % leaves[leaf].rows();
      const Eigen::Index col = idx / leaves[leaf].rows();
      const double x0 = leaves[leaf](row, col);
      probe[leaf](row, col) = x0 + options.step;
      const double up = evaluate(probe);
      probe[leaf](row, col) = x0 - options.step;
      const double down = evaluate(probe);
      probe[leaf](row, col) = x0;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[leaf](row, col);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (rel > options.tolerance) report.failures.push_back({static_cast<int>(leaf), row, col, a, numeric});
    }
  }
  return report;
}

}  // namespace rgfm::ad
