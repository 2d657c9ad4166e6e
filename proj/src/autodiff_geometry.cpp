#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <thread>

#include "rgfm/autodiff.hpp"
#include "rgfm/rng.hpp"
#include "rgfm/trig.hpp"

namespace rgfm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sgn(double kappa) { return kappa > 0 ? 1.0 : (kappa < 0 ? -1.0 : 0.0); }

template <typename A, typename B>
double inner(const A& a, const B& b, double kappa) {
  const auto n = a.size();
  return sgn(kappa) * a(0) * b(0) + a.tail(n - 1).dot(b.tail(n - 1));
}

// J v: the time component scaled by sgn(kappa).
template <typename A>
Eigen::RowVectorXd metric(const A& v, double kappa) {
  Eigen::RowVectorXd out = v;
  out(0) *= sgn(kappa);
  return out;
}

void require_cols(const Mat& a, const Mat& b, const char* op) {
  if (a.cols() != b.cols()) throw DimensionError(fmt::format("{}: {} vs {} columns", op, a.cols(), b.cols()));
}

void require_pairs(const PairIndex& pairs, Eigen::Index sources, Eigen::Index targets, const char* op) {
  if (pairs.target.size() != pairs.source.size() || pairs.offsets.back() != static_cast<int>(pairs.size())) {
    throw ContractError(fmt::format("{}: malformed pair index", op));
  }
  if (pairs.num_targets() != targets) {
    throw DimensionError(fmt::format("{}: {} targets for {} rows", op, pairs.num_targets(), targets));
  }
  for (int s : pairs.source) {
    if (s < 0 || s >= sources) throw DimensionError(fmt::format("{}: source row {} out of range", op, s));
  }
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2 * workers) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back([&fn, begin, end = std::min(n, begin + chunk)] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

// sin_k(theta)/theta and its derivative over theta, with series near 0.
double sinc_k(double theta, double kappa) {
  if (theta < 1e-6) return 1.0 - sgn(kappa) * theta * theta / 6.0;
  return sin_k(theta, kappa) / theta;
}

double sinc_k_derivative_over_theta(double theta, double kappa) {
  if (theta < 1e-6) return -sgn(kappa) / 3.0;
  return (theta * cos_k(theta, kappa) - sin_k(theta, kappa)) / (theta * theta * theta);
}

double cos_k_derivative_over_theta(double theta, double kappa) {
  if (theta < 1e-6) return -sgn(kappa);
  return cos_k_derivative(theta, kappa) / theta;
}

}  // namespace

Var inner_rows(Tape& t, Var a, Var b, double kappa) {
  const Mat& x = t.value(a);
  const Mat& y = t.value(b);
  if (x.rows() != y.rows()) throw DimensionError("inner_rows: row counts differ");
  require_cols(x, y, "inner_rows");
  Mat out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, 0) = inner(x.row(i), y.row(i), kappa);
  return t.push("inner_rows", std::move(out), {a, b}, [a, b, kappa](const Mat& g, Tape& tape) {
    const Mat& x = tape.value(a);
    const Mat& y = tape.value(b);
    Mat gx(x.rows(), x.cols());
    Mat gy(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      gx.row(i) = g(i, 0) * metric(y.row(i), kappa);
      gy.row(i) = g(i, 0) * metric(x.row(i), kappa);
    }
    tape.accumulate(a, gx);
    tape.accumulate(b, gy);
  });
}

Var manifold_linear(Tape& t, Var x, Var w, double kappa) {
  const Mat& xv = t.value(x);
  const Mat& wv = t.value(w);
  const Eigen::Index din = xv.cols() - 1;
  if (wv.cols() != din) {
    throw DimensionError(fmt::format("manifold_linear: weight takes {} inputs, points have {}", wv.cols(), din));
  }
  const Eigen::Index n = xv.rows();
  const Eigen::Index dout = wv.rows();
  Mat u = xv.rightCols(din) * wv.transpose();
  Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd norm = u.rowwise().norm();
  Mat out(n, dout + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (kappa == 0.0) {
      out(i, 0) = 0.0;
      out.row(i).tail(dout) = u.row(i);
      continue;
    }
    const double xt = xv(i, 0);
    target[i] = std::sqrt(std::max(0.0, 1.0 / kappa - sgn(kappa) * xt * xt));
    out(i, 0) = xt;
    if (target[i] == 0.0) {
      out.row(i).tail(dout).setZero();
      continue;
    }
    if (norm[i] <= kZeroTol) {
      throw DegenerateDirectionError(
          fmt::format("manifold_linear: |W x_s| = {:.3e} leaves no direction to rescale", norm[i]));
    }
    out.row(i).tail(dout) = (target[i] / norm[i]) * u.row(i);
  }
  return t.push("manifold_linear", std::move(out), {x, w},
                [x, w, kappa, u = std::move(u), target = std::move(target), norm = std::move(norm)](
                    const Mat& g, Tape& tape) {
                  const Mat& xv = tape.value(x);
                  const Mat& wv = tape.value(w);
                  const Eigen::Index din = wv.cols();
                  Mat du(u.rows(), u.cols());
                  Mat dx = Mat::Zero(xv.rows(), xv.cols());
                  for (Eigen::Index i = 0; i < u.rows(); ++i) {
                    const auto gs = g.row(i).tail(u.cols());
                    if (kappa == 0.0) {
                      du.row(i) = gs;
                      continue;
                    }
                    dx(i, 0) = g(i, 0);
                    if (target[i] == 0.0) {
                      du.row(i).setZero();
                      continue;
                    }
                    const double gu = gs.dot(u.row(i));
                    const double n = norm[i];
                    dx(i, 0) += (gu / n) * (-sgn(kappa) * xv(i, 0) / target[i]);
                    du.row(i) = (target[i] / n) * gs - (target[i] * gu / (n * n * n)) * u.row(i);
                  }
                  if (tape.requires_grad(w)) tape.accumulate(w, du.transpose() * xv.rightCols(din));
                  if (tape.requires_grad(x)) {
                    dx.rightCols(din) = du * wv;
                    tape.accumulate(x, dx);
                  }
                });
}

Var midpoint_normalize(Tape& t, Var sums, double kappa) {
  const Mat& s = t.value(sums);
  if (kappa == 0.0) {
    return t.push("midpoint_normalize", s, {sums}, [sums](const Mat& g, Tape& tape) { tape.accumulate(sums, g); });
  }
  const double root = std::sqrt(std::abs(kappa));
  Mat out(s.rows(), s.cols());
  Eigen::VectorXd sign(s.rows());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double n = inner(s.row(i), s.row(i), kappa);
    if (std::abs(n) <= kZeroTol) {
      throw DegenerateMidpointError(fmt::format("midpoint_normalize: weighted sum has kappa-norm {:.3e}", n));
    }
    sign[i] = (kappa < 0 && s(i, 0) < 0) ? -1.0 : 1.0;
    out.row(i) = (sign[i] / (root * std::sqrt(std::abs(n)))) * s.row(i);
  }
  return t.push("midpoint_normalize", std::move(out), {sums},
                [sums, kappa, root, sign = std::move(sign)](const Mat& g, Tape& tape) {
                  const Mat& s = tape.value(sums);
                  Mat ds(s.rows(), s.cols());
                  for (Eigen::Index i = 0; i < s.rows(); ++i) {
                    const double n = inner(s.row(i), s.row(i), kappa);
                    const double r = std::sqrt(std::abs(n));
                    const double gs = g.row(i).dot(s.row(i));
                    const double sn = n > 0 ? 1.0 : -1.0;
                    ds.row(i) = (sign[i] / root) * (g.row(i) / r - (gs * sn / (r * r * r)) * metric(s.row(i), kappa));
                  }
                  tape.accumulate(sums, ds);
                });
}

Var segment_weighted_sum(Tape& t, Var values, Var weights, std::shared_ptr<const PairIndex> pairs) {
  const Mat& v = t.value(values);
  const Mat& w = t.value(weights);
  if (w.rows() != static_cast<Eigen::Index>(pairs->size()) || w.cols() != 1) {
    throw DimensionError("segment_weighted_sum: one weight per pair expected");
  }
  require_pairs(*pairs, v.rows(), pairs->num_targets(), "segment_weighted_sum");
  Mat out = Mat::Zero(pairs->num_targets(), v.cols());
  for (std::size_t p = 0; p < pairs->size(); ++p) out.row(pairs->target[p]) += w(p, 0) * v.row(pairs->source[p]);
  return t.push("segment_weighted_sum", std::move(out), {values, weights},
                [values, weights, pairs = std::move(pairs)](const Mat& g, Tape& tape) {
                  const Mat& v = tape.value(values);
                  const Mat& w = tape.value(weights);
                  if (tape.requires_grad(values)) {
                    Mat& gv = tape.grad_buffer(values);
                    for (std::size_t p = 0; p < pairs->size(); ++p) {
                      gv.row(pairs->source[p]) += w(p, 0) * g.row(pairs->target[p]);
                    }
                  }
                  if (tape.requires_grad(weights)) {
                    Mat gw(w.rows(), 1);
                    for (std::size_t p = 0; p < pairs->size(); ++p) {
                      gw(p, 0) = g.row(pairs->target[p]).dot(v.row(pairs->source[p]));
                    }
                    tape.accumulate(weights, gw);
                  }
                });
}

Var segment_softmax(Tape& t, Var scores, std::shared_ptr<const PairIndex> pairs,
                    std::shared_ptr<const std::vector<char>> uniform) {
  const Mat& s = t.value(scores);
  if (s.rows() != static_cast<Eigen::Index>(pairs->size()) || s.cols() != 1) {
    throw DimensionError("segment_softmax: one score per pair expected");
  }
  if (uniform && uniform->size() != static_cast<std::size_t>(pairs->num_targets())) {
    throw DimensionError("segment_softmax: one uniform flag per segment expected");
  }
  Mat out(s.rows(), 1);
  for (int seg = 0; seg < pairs->num_targets(); ++seg) {
    const int begin = pairs->offsets[seg];
    const int end = pairs->offsets[seg + 1];
    if (begin == end) continue;
    if (uniform && (*uniform)[seg]) {
      out.middleRows(begin, end - begin).setConstant(1.0 / (end - begin));
      continue;
    }
    const double top = s.middleRows(begin, end - begin).maxCoeff();
    double total = 0.0;
    for (int p = begin; p < end; ++p) total += out(p, 0) = std::exp(s(p, 0) - top);
    out.middleRows(begin, end - begin) /= total;
  }
  Mat weights = out;
  return t.push("segment_softmax", std::move(out), {scores},
                [scores, pairs = std::move(pairs), uniform = std::move(uniform), weights = std::move(weights)](
                    const Mat& g, Tape& tape) {
                  Mat gs = Mat::Zero(weights.rows(), 1);
                  for (int seg = 0; seg < pairs->num_targets(); ++seg) {
                    if (uniform && (*uniform)[seg]) continue;
                    const int begin = pairs->offsets[seg];
                    const int end = pairs->offsets[seg + 1];
                    double mean = 0.0;
                    for (int p = begin; p < end; ++p) mean += weights(p, 0) * g(p, 0);
                    for (int p = begin; p < end; ++p) gs(p, 0) = weights(p, 0) * (g(p, 0) - mean);
                  }
                  tape.accumulate(scores, gs);
                });
}

Var pair_scores(Tape& t, Var q, Var k, std::shared_ptr<const std::vector<int>> q_rows,
                std::shared_ptr<const std::vector<int>> k_rows, const PhiVars& phi, Dropout dropout) {
  const Mat& qv = t.value(q);
  const Mat& kv = t.value(k);
  const Mat& a = t.value(phi.hidden_weight);
  const Mat& b1 = t.value(phi.hidden_bias);
  const Mat& w2 = t.value(phi.out_weight);
  const double b2 = t.value(phi.out_bias)(0, 0);
  const Eigen::Index d = qv.cols();
  const Eigen::Index hidden = a.rows();
  require_cols(qv, kv, "pair_scores");
  if (a.cols() != 2 * d || b1.rows() != hidden || w2.rows() != hidden) {
    throw DimensionError(fmt::format("pair_scores: phi expects inputs of width {}, got 2x{}", a.cols(), d));
  }
  if (q_rows->size() != k_rows->size()) throw DimensionError("pair_scores: query and key index lists differ");
  for (int r : *q_rows) {
    if (r < 0 || r >= qv.rows()) throw DimensionError("pair_scores: query row out of range");
  }
  for (int r : *k_rows) {
    if (r < 0 || r >= kv.rows()) throw DimensionError("pair_scores: key row out of range");
  }
  if (!(dropout.rate >= 0.0 && dropout.rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");

  // First layer split into query and key halves so each row is projected once.
  RowMat hq = qv * a.leftCols(d).transpose();
  RowMat hk = kv * a.rightCols(d).transpose();
  hq.rowwise() += b1.col(0).transpose();

  const std::size_t pairs = q_rows->size();
  const auto rows = static_cast<Eigen::Index>(pairs);
  auto act = std::make_shared<RowMat>(rows, hidden);
  for (Eigen::Index p = 0; p < rows; ++p) {
    act->row(p) = hq.row((*q_rows)[static_cast<std::size_t>(p)]) + hk.row((*k_rows)[static_cast<std::size_t>(p)]);
  }
  parallel_for(pairs, t.threads(), [&](std::size_t begin, std::size_t end) {
    auto block = act->middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    block.array() = tanh_array(block.array());
  });
  // Scaled keep mask, zero where a unit is dropped; empty without dropout.
  auto mask = std::make_shared<RowMat>();
  if (dropout.rate > 0.0) {
    const auto threshold = std::min<std::uint64_t>(65535, static_cast<std::uint64_t>(std::ceil(dropout.rate * 65536.0)));
    const double keep = 65536.0 / static_cast<double>(65536 - threshold);
    mask->resize(rows, hidden);
    parallel_for(pairs, t.threads(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        std::uint64_t bits = 0;
        for (Eigen::Index u = 0; u < hidden; ++u) {
          if (u % 4 == 0) bits = hash_bits(dropout.seed, p, static_cast<std::uint64_t>(u / 4));
          (*mask)(static_cast<Eigen::Index>(p), u) = (bits & 0xffff) < threshold ? 0.0 : keep;
          bits >>= 16;
        }
      }
    });
  }
  Mat out(rows, 1);
  if (dropout.rate > 0.0) {
    out.col(0) = act->cwiseProduct(*mask) * w2.col(0);
  } else {
    out.col(0) = *act * w2.col(0);
  }
  out.array() += b2;

  return t.push(
      "pair_scores", std::move(out), {q, k, phi.hidden_weight, phi.hidden_bias, phi.out_weight, phi.out_bias},
      [q, k, phi, q_rows = std::move(q_rows), k_rows = std::move(k_rows), act, mask](const Mat& g, Tape& tape) {
        const Mat& qv = tape.value(q);
        const Mat& kv = tape.value(k);
        const Mat& a = tape.value(phi.hidden_weight);
        const Eigen::RowVectorXd w2row = tape.value(phi.out_weight).col(0).transpose();
        const Eigen::Index d = qv.cols();
        const Eigen::Index hidden = a.rows();

        RowMat dhq = RowMat::Zero(qv.rows(), hidden);
        RowMat dhk = RowMat::Zero(kv.rows(), hidden);
        Eigen::RowVectorXd dw2 = Eigen::RowVectorXd::Zero(hidden);
        Eigen::RowVectorXd gated(hidden);
        Eigen::RowVectorXd dpre(hidden);
        const bool masked = mask->size() > 0;
        for (Eigen::Index p = 0; p < act->rows(); ++p) {
          const double gp = g(p, 0);
          if (gp == 0.0) continue;
          const auto row = act->row(p);
          if (masked) {
            gated = gp * mask->row(p);
          } else {
            gated.setConstant(gp);
          }
          dw2.array() += gated.array() * row.array();
          dpre.array() = gated.array() * w2row.array() * (1.0 - row.array().square());
          dhq.row((*q_rows)[static_cast<std::size_t>(p)]) += dpre;
          dhk.row((*k_rows)[static_cast<std::size_t>(p)]) += dpre;
        }
        if (tape.requires_grad(q)) tape.accumulate(q, dhq * a.leftCols(d));
        if (tape.requires_grad(k)) tape.accumulate(k, dhk * a.rightCols(d));
        if (tape.requires_grad(phi.hidden_weight)) {
          Mat da(hidden, 2 * d);
          da.leftCols(d) = dhq.transpose() * qv;
          da.rightCols(d) = dhk.transpose() * kv;
          tape.accumulate(phi.hidden_weight, da);
        }
        // The bias enters through the query half; dhq sums over every pair.
        tape.accumulate(phi.hidden_bias, dhq.colwise().sum().transpose());
        tape.accumulate(phi.out_weight, dw2.transpose());
        tape.accumulate(phi.out_bias, Mat::Constant(1, 1, g.sum()));
      });
}

Var bundle_conv(Tape& t, Var p_src, Var z_src, Var p_tgt, Var weights, std::shared_ptr<const PairIndex> pairs,
                double kappa) {
  const Mat& ps = t.value(p_src);
  const Mat& zs = t.value(z_src);
  const Mat& pt = t.value(p_tgt);
  const Mat& w = t.value(weights);
  require_cols(ps, zs, "bundle_conv");
  require_cols(ps, pt, "bundle_conv");
  if (ps.rows() != zs.rows()) throw DimensionError("bundle_conv: source coordinates and encodings differ in rows");
  if (w.rows() != static_cast<Eigen::Index>(pairs->size()) || w.cols() != 1) {
    throw DimensionError("bundle_conv: one weight per pair expected");
  }
  require_pairs(*pairs, ps.rows(), pt.rows(), "bundle_conv");

  Mat out = Mat::Zero(pt.rows(), pt.cols());
  for (std::size_t p = 0; p < pairs->size(); ++p) {
    const int tg = pairs->target[p];
    const int s = pairs->source[p];
    const double b = 1.0 + kappa * inner(ps.row(s), pt.row(tg), kappa);
    if (b <= kZeroTol) throw DegeneratePairError("bundle_conv: antipodal source and target");
    const double c = kappa * inner(zs.row(s), pt.row(tg), kappa) / b;
    out.row(tg) += w(p, 0) * (zs.row(s) - c * (ps.row(s) + pt.row(tg)));
  }
  return t.push("bundle_conv", std::move(out), {p_src, z_src, p_tgt, weights},
                [p_src, z_src, p_tgt, weights, pairs = std::move(pairs), kappa](const Mat& g, Tape& tape) {
                  const Mat& ps = tape.value(p_src);
                  const Mat& zs = tape.value(z_src);
                  const Mat& pt = tape.value(p_tgt);
                  const Mat& w = tape.value(weights);
                  Mat dps = Mat::Zero(ps.rows(), ps.cols());
                  Mat dzs = Mat::Zero(zs.rows(), zs.cols());
                  Mat dpt = Mat::Zero(pt.rows(), pt.cols());
                  Mat dw(w.rows(), 1);
                  for (std::size_t p = 0; p < pairs->size(); ++p) {
                    const int tg = pairs->target[p];
                    const int s = pairs->source[p];
                    const auto src = ps.row(s);
                    const auto z = zs.row(s);
                    const auto tgt = pt.row(tg);
                    const auto gt = g.row(tg);
                    const double a = inner(z, tgt, kappa);
                    const double b = 1.0 + kappa * inner(src, tgt, kappa);
                    const double c = kappa * a / b;
                    const Eigen::RowVectorXd sum = src + tgt;
                    dw(p, 0) = gt.dot(z) - c * gt.dot(sum);
                    const Eigen::RowVectorXd gw = w(p, 0) * gt;
                    const double gc = -gw.dot(sum);
                    const double da = gc * kappa / b;
                    const double db = -gc * kappa * a / (b * b);
                    dzs.row(s) += gw + da * metric(tgt, kappa);
                    dpt.row(tg) += -c * gw + da * metric(z, kappa) + db * kappa * metric(src, kappa);
                    dps.row(s) += -c * gw + db * kappa * metric(tgt, kappa);
                  }
                  tape.accumulate(p_src, dps);
                  tape.accumulate(z_src, dzs);
                  tape.accumulate(p_tgt, dpt);
                  tape.accumulate(weights, dw);
                });
}

Var project_tangent(Tape& t, Var p, Var w, double kappa) {
  const Mat& pv = t.value(p);
  const Mat& wv = t.value(w);
  if (pv.rows() != wv.rows()) throw DimensionError("project_tangent: row counts differ");
  require_cols(pv, wv, "project_tangent");
  Mat out(wv.rows(), wv.cols());
  for (Eigen::Index i = 0; i < wv.rows(); ++i) out.row(i) = wv.row(i) - kappa * inner(wv.row(i), pv.row(i), kappa) * pv.row(i);
  return t.push("project_tangent", std::move(out), {p, w}, [p, w, kappa](const Mat& g, Tape& tape) {
    const Mat& pv = tape.value(p);
    const Mat& wv = tape.value(w);
    Mat dp(pv.rows(), pv.cols());
    Mat dw(wv.rows(), wv.cols());
    for (Eigen::Index i = 0; i < wv.rows(); ++i) {
      const double m = inner(wv.row(i), pv.row(i), kappa);
      const double gp = g.row(i).dot(pv.row(i));
      dw.row(i) = g.row(i) - kappa * gp * metric(pv.row(i), kappa);
      dp.row(i) = -kappa * m * g.row(i) - kappa * gp * metric(wv.row(i), kappa);
    }
    tape.accumulate(p, dp);
    tape.accumulate(w, dw);
  });
}

Var exp_map(Tape& t, Var x, Var v, double kappa) {
  const Mat& xv = t.value(x);
  const Mat& vv = t.value(v);
  if (xv.rows() != vv.rows()) throw DimensionError("exp_map: row counts differ");
  require_cols(xv, vv, "exp_map");
  if (kappa == 0.0) {
    return t.push("exp_map", xv + vv, {x, v}, [x, v](const Mat& g, Tape& tape) {
      tape.accumulate(x, g);
      tape.accumulate(v, g);
    });
  }
  const double root = std::sqrt(std::abs(kappa));
  Eigen::VectorXd theta(xv.rows());
  Mat out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    theta[i] = root * std::sqrt(std::max(0.0, inner(vv.row(i), vv.row(i), kappa)));
    if (kappa > 0 && theta[i] >= M_PI) {
      throw InjectivityError(fmt::format("exp_map: step of angle {:.6f} reaches the antipode", theta[i]));
    }
    out.row(i) = cos_k(theta[i], kappa) * xv.row(i) + sinc_k(theta[i], kappa) * vv.row(i);
  }
  return t.push("exp_map", std::move(out), {x, v}, [x, v, kappa, theta = std::move(theta)](const Mat& g, Tape& tape) {
    const Mat& xv = tape.value(x);
    const Mat& vv = tape.value(v);
    Mat dx(xv.rows(), xv.cols());
    Mat dv(vv.rows(), vv.cols());
    const double ak = std::abs(kappa);
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      const double th = theta[i];
      dx.row(i) = cos_k(th, kappa) * g.row(i);
      // d theta / d v = |kappa| J v / theta; the 1/theta is folded into the ratios.
      const double radial = g.row(i).dot(xv.row(i)) * cos_k_derivative_over_theta(th, kappa) +
                            g.row(i).dot(vv.row(i)) * sinc_k_derivative_over_theta(th, kappa);
      dv.row(i) = sinc_k(th, kappa) * g.row(i) + radial * ak * metric(vv.row(i), kappa);
    }
    tape.accumulate(x, dx);
    tape.accumulate(v, dv);
  });
}

Var distance(Tape& t, Var x, Var y, double kappa) {
  const Mat& xv = t.value(x);
  const Mat& yv = t.value(y);
  if (xv.rows() != yv.rows()) throw DimensionError("distance: row counts differ");
  require_cols(xv, yv, "distance");
  Mat out(xv.rows(), 1);
  const double root = std::sqrt(std::abs(kappa));
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    if (kappa == 0.0) {
      out(i, 0) = (xv.row(i) - yv.row(i)).norm();
      continue;
    }
    // Angle from the tangential residual, as in the plain geometry kernel.
    const double beta = kappa * inner(xv.row(i), yv.row(i), kappa);
    const Eigen::RowVectorXd w = yv.row(i) - beta * xv.row(i);
    const double n = root * std::sqrt(std::abs(inner(w, w, kappa)));
    double theta;
    if (kappa > 0) {
      theta = std::atan2(n, beta);
    } else {
      theta = beta > 2.0 ? std::acosh(beta) : std::asinh(n);
    }
    out(i, 0) = theta / root;
  }
  return t.push("distance", std::move(out), {x, y}, [x, y, kappa, root](const Mat& g, Tape& tape) {
    const Mat& xv = tape.value(x);
    const Mat& yv = tape.value(y);
    Mat dx(xv.rows(), xv.cols());
    Mat dy(yv.rows(), yv.cols());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      if (kappa == 0.0) {
        const Eigen::RowVectorXd diff = xv.row(i) - yv.row(i);
        const double n = diff.norm();
        const Eigen::RowVectorXd unit = n > kZeroTol ? Eigen::RowVectorXd(diff / n) : Eigen::RowVectorXd::Zero(diff.size());
        dx.row(i) = g(i, 0) * unit;
        dy.row(i) = -g(i, 0) * unit;
        continue;
      }
      const double beta = kappa * inner(xv.row(i), yv.row(i), kappa);
      const double slope = g(i, 0) * acos_k_derivative(beta, kappa) / root;
      dx.row(i) = slope * kappa * metric(yv.row(i), kappa);
      dy.row(i) = slope * kappa * metric(xv.row(i), kappa);
    }
    tape.accumulate(x, dx);
    tape.accumulate(y, dy);
  });
}

Var contrastive(Tape& t, Var u, Var v, double tau) {
  const Mat& uv = t.value(u);
  const Mat& vv = t.value(v);
  if (uv.rows() != vv.rows() || uv.cols() != vv.cols()) throw DimensionError("contrastive: shapes differ");
  if (!(tau > 0.0)) throw ArgumentError("contrastive: temperature must be positive");
  const Mat m = uv * vv.transpose() / tau;
  const Eigen::Index n = m.rows();
  // Row softmax scores H_i against every S_j; column softmax scores S_i against every H_j.
  Mat row_soft(n, n);
  Mat col_soft(n, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = m.row(i).maxCoeff();
    row_soft.row(i) = (m.row(i).array() - top).exp();
    const double total = row_soft.row(i).sum();
    row_soft.row(i) /= total;
    loss += top + std::log(total) - m(i, i);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double top = m.col(j).maxCoeff();
    col_soft.col(j) = (m.col(j).array() - top).exp();
    const double total = col_soft.col(j).sum();
    col_soft.col(j) /= total;
    loss += top + std::log(total) - m(j, j);
  }
  Mat dm = row_soft + col_soft - 2.0 * Mat::Identity(n, n);
  return t.push("contrastive", Mat::Constant(1, 1, loss), {u, v}, [u, v, tau, dm = std::move(dm)](const Mat& g, Tape& tape) {
    const double s = g(0, 0) / tau;
    if (tape.requires_grad(u)) tape.accumulate(u, s * dm * tape.value(v));
    if (tape.requires_grad(v)) tape.accumulate(v, s * dm.transpose() * tape.value(u));
  });
}

}  // namespace rgfm::ad
