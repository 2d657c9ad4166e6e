#pragma once

// Downstream heads on frozen embeddings: link prediction and few-shot node
// classification.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgfm/ccs.hpp"
#include "rgfm/graph.hpp"

namespace rgfm {

struct LinkSplit {
  std::vector<Edge> train_edges;
  std::vector<Edge> test_pos_edges;
  std::vector<Edge> test_neg_edges;
  double ratio = 0.2;
  std::uint64_t seed = 0;

  /// The graph with the held-out edges removed (same node set and labels).
  Graph train_graph(const Graph& full) const;
};

/// Holds out round(ratio * |E|) edges (at least one) and draws as many
/// distinct uniform non-edges. Throws ArgumentError when the graph has too
/// few edges or non-edges.
LinkSplit split_links(const Graph& graph, double ratio, std::uint64_t seed);

struct FewShotSplit {
  int k = 1;
  std::vector<int> train_ids;  // ascending
  std::vector<int> test_ids;   // ascending
  std::uint64_t seed = 0;
};

/// min(k, class size) random training nodes per class, every other labeled
/// node for testing. Nodes labeled -1 are left out.
FewShotSplit split_few_shot(std::span<const int> labels, int k, std::uint64_t seed);

enum class LinkScorer { dot, distance };

/// dot: row_u . row_v. distance: minus the sum over factors of the geodesic
/// distance between Exp_o of each factor's column block; factors must cover
/// the table's columns in order.
std::vector<double> score_links(const Mat& table, std::span<const Edge> pairs, LinkScorer scorer = LinkScorer::dot,
                                std::span<const SpaceSpec> factors = {});

struct Ranking {
  double auc;
  double ap;
};

/// Rank AUC with ties counted one half; AP as the step-wise area under the
/// precision-recall curve, tied scores entering together.
Ranking auc_ap(std::span<const double> pos_scores, std::span<const double> neg_scores);

struct HeadConfig {
  double l2 = 1e-4;
  int epochs = 500;
  double learning_rate = 0.1;
};

struct Classification {
  double accuracy;
  double weighted_f1;
  std::vector<int> predictions;  // per test id
};

/// Full-batch gradient descent on an L2-regularized multinomial logistic
/// head over the train ids; metrics on the test ids. labels[i] is the class
/// of node i.
Classification classify_nodes(const Mat& table, std::span<const int> labels, const FewShotSplit& split,
                              const HeadConfig& head = {});

/// Support-weighted mean of per-class F1 over the classes present in truth.
double weighted_f1(std::span<const int> truth, std::span<const int> predicted);

struct Metrics {
  std::optional<double> auc, ap, acc, weighted_f1;
  std::uint64_t seed = 0;
  std::optional<int> k;
  std::vector<std::pair<std::string, std::string>> config;  // resolved run config
};

/// "key = value" lines, metrics first, then the config under "config.".
void write_metrics_text(std::ostream& out, const Metrics& metrics);
/// One JSON object with fields auc, ap, acc, weighted_f1, seed, k (absent
/// metrics as null) and a "config" object.
void write_metrics_json(std::ostream& out, const Metrics& metrics);

}  // namespace rgfm
