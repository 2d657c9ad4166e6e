#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rgfm {

using Edge = std::pair<int, int>;

/// Undirected simple graph in compressed neighbor-list form. Neighbor lists
/// are sorted and symmetric; self-loops and duplicate edges are dropped at
/// construction.
class Graph {
 public:
  Graph() = default;
  static Graph from_edges(int num_nodes, std::span<const Edge> edges);

  int num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return targets_.size() / 2; }
  std::span<const int> neighbors(int u) const {
    return {targets_.data() + offsets_[u], targets_.data() + offsets_[u + 1]};
  }
  int degree(int u) const { return static_cast<int>(offsets_[u + 1] - offsets_[u]); }
  bool has_edge(int u, int v) const;
  /// Each undirected edge once as (u, v) with u < v, sorted.
  std::vector<Edge> edges() const;

  /// Per-node class ids, -1 for unlabeled nodes.
  const std::optional<std::vector<int>>& labels() const { return labels_; }
  void set_labels(std::vector<int> labels);

  /// Raw node attributes. The structural model ignores them.
  const std::optional<Eigen::MatrixXd>& features() const { return features_; }
  void set_features(Eigen::MatrixXd features);

 private:
  int num_nodes_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<int> targets_;
  std::optional<std::vector<int>> labels_;
  std::optional<Eigen::MatrixXd> features_;
};

/// Reads "u v" lines ('#' starts a comment). num_nodes = max id + 1.
Graph load_edge_list(const std::filesystem::path& path);

/// Reads "node_id class_id" lines into a vector of length num_nodes
/// (unlisted nodes get -1).
std::vector<int> load_labels(const std::filesystem::path& path, int num_nodes);

}  // namespace rgfm
