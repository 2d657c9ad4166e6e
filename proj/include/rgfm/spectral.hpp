#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rgfm/graph.hpp"

namespace rgfm {

enum class EigenMode { largest, smallest };

struct SpectralOptions {
  EigenMode mode = EigenMode::largest;
  std::uint64_t seed = 0;
  // Graphs up to this many nodes use the dense symmetric solver; larger
  // ones use seeded block power iteration.
  int dense_limit = 4096;
  double tolerance = 1e-8;
  int max_iterations = 20000;
};

struct SpectralInit {
  Eigen::MatrixXd encodings;  // num_nodes x K, one eigenvector per column
  Eigen::VectorXd eigenvalues;  // matching the columns
  int k() const { return static_cast<int>(encodings.cols()); }
};

/// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes get an all-zero row and column.
Eigen::SparseMatrix<double> normalized_laplacian(const Graph& g);

/// Eigenvectors of the K largest (or smallest) eigenvalues of the normalized
/// Laplacian, ordered from the extreme inward. Each column has unit norm and
/// its first entry with magnitude above 1e-10 is positive. Rows of isolated
/// nodes are zeroed.
SpectralInit normalized_laplacian_topk(const Graph& g, int k, const SpectralOptions& options = {});

}  // namespace rgfm
