#include "rgfm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rgfm/errors.hpp"
#include "rgfm/rng.hpp"

namespace rgfm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void fix_signs(MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      if (std::abs(vectors(r, c)) > 1e-10) {
        if (vectors(r, c) < 0) vectors.col(c) *= -1.0;
        break;
      }
    }
  }
}

// Eigenpairs of a symmetric matrix ordered by decreasing eigenvalue.
void sorted_descending(const MatrixXd& sym, VectorXd& values, MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  values = solver.eigenvalues().reverse();
  vectors = solver.eigenvectors().rowwise().reverse();
}

// Subspace iteration with Rayleigh-Ritz for the top eigenpairs of a PSD
// operator whose spectrum lies in [0, 2].
void block_power(const Eigen::SparseMatrix<double>& op, int k, const SpectralOptions& options,
                 VectorXd& values, MatrixXd& vectors) {
  const auto n = op.rows();
  const auto block = std::min<Eigen::Index>(n, k + 10);
  Engine rng(derive_seed(options.seed, {0x5eed}));
  MatrixXd x(n, block);
  for (Eigen::Index c = 0; c < block; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) x(r, c) = standard_normal(rng);
  }
  MatrixXd q = Eigen::HouseholderQR<MatrixXd>(x).householderQ() * MatrixXd::Identity(n, block);

  VectorXd ritz;
  MatrixXd rotation;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    MatrixXd y = op * q;
    q = Eigen::HouseholderQR<MatrixXd>(y).householderQ() * MatrixXd::Identity(n, block);
    MatrixXd aq = op * q;
    MatrixXd t = q.transpose() * aq;
    t = 0.5 * (t + t.transpose());
    sorted_descending(t, ritz, rotation);
    q = q * rotation;
    aq = aq * rotation;

    double worst = 0.0;
    for (int i = 0; i < k; ++i) worst = std::max(worst, (aq.col(i) - ritz[i] * q.col(i)).norm());
    if (worst <= options.tolerance) {
      values = ritz.head(k);
      vectors = q.leftCols(k);
      return;
    }
  }
  throw NumericError(fmt::format("block power iteration did not reach tolerance {} in {} iterations",
                                 options.tolerance, options.max_iterations));
}

}  // namespace

Eigen::SparseMatrix<double> normalized_laplacian(const Graph& g) {
  const int n = g.num_nodes();
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n), 0.0);
  for (int u = 0; u < n; ++u) {
    if (g.degree(u) > 0) inv_sqrt_deg[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u)));
  }
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(n) + 2 * g.num_edges());
  for (int u = 0; u < n; ++u) {
    if (g.degree(u) == 0) continue;
    entries.emplace_back(u, u, 1.0);
    for (int v : g.neighbors(u)) entries.emplace_back(u, v, -inv_sqrt_deg[u] * inv_sqrt_deg[v]);
  }
  Eigen::SparseMatrix<double> lap(n, n);
  lap.setFromTriplets(entries.begin(), entries.end());
  return lap;
}

SpectralInit normalized_laplacian_topk(const Graph& g, int k, const SpectralOptions& options) {
  const int n = g.num_nodes();
  if (k < 1 || k > n) {
    throw ArgumentError(fmt::format("spectral dimension K = {} outside [1, {}]", k, n));
  }
  const Eigen::SparseMatrix<double> lap = normalized_laplacian(g);

  SpectralInit out;
  VectorXd values;
  MatrixXd vectors;
  if (n <= options.dense_limit) {
    MatrixXd dense = MatrixXd(lap);
    if (options.mode == EigenMode::smallest) dense = 2.0 * MatrixXd::Identity(n, n) - dense;
    sorted_descending(dense, values, vectors);
    values = values.head(k).eval();
    vectors = vectors.leftCols(k).eval();
  } else {
    spdlog::debug("spectral init: block power iteration on {} nodes", n);
    Eigen::SparseMatrix<double> op = lap;
    if (options.mode == EigenMode::smallest) {
      Eigen::SparseMatrix<double> shift(n, n);
      shift.setIdentity();
      op = 2.0 * shift - lap;
    }
    block_power(op, k, options, values, vectors);
  }
  if (options.mode == EigenMode::smallest) values = (2.0 - values.array()).matrix();

  fix_signs(vectors);
  for (int u = 0; u < n; ++u) {
    if (g.degree(u) == 0) vectors.row(u).setZero();
  }
  out.encodings = std::move(vectors);
  out.eigenvalues = std::move(values);
  return out;
}

}  // namespace rgfm
