#include "rgfm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "rgfm/rng.hpp"

namespace rgfm {

namespace {

constexpr std::uint64_t kNegativeStream = 0x6e65;

Edge ordered(int u, int v) { return u < v ? Edge{u, v} : Edge{v, u}; }

void check_row(const Mat& table, int id) {
  if (id < 0 || id >= table.rows()) {
    throw ArgumentError(fmt::format("node id {} outside the embedding table ({} rows)", id, table.rows()));
  }
}

std::string json_number(const std::optional<double>& x) {
  return x ? nlohmann::json(*x).dump() : "null";
}

}  // namespace

Graph LinkSplit::train_graph(const Graph& full) const {
  Graph g = Graph::from_edges(full.num_nodes(), train_edges);
  if (full.labels()) g.set_labels(*full.labels());
  if (full.features()) g.set_features(*full.features());
  return g;
}

LinkSplit split_links(const Graph& graph, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("holdout ratio must lie in (0, 1)");
  std::vector<Edge> edges = graph.edges();
  const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(edges.size()))));
  if (held >= edges.size()) throw ArgumentError(fmt::format("cannot hold out {} of {} edges", held, edges.size()));
  const auto n = static_cast<std::uint64_t>(graph.num_nodes());
  const std::uint64_t non_edges = n * (n - 1) / 2 - edges.size();
  if (non_edges < held) throw ArgumentError("graph has too few non-edges for the negative set");

  Engine rng(seed);
  shuffle(std::span<Edge>(edges), rng);
  LinkSplit split;
  split.ratio = ratio;
  split.seed = seed;
  split.test_pos_edges.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(held));
  split.train_edges.assign(edges.begin() + static_cast<std::ptrdiff_t>(held), edges.end());
  std::sort(split.test_pos_edges.begin(), split.test_pos_edges.end());
  std::sort(split.train_edges.begin(), split.train_edges.end());

  Engine neg_rng(derive_seed(seed, {kNegativeStream}));
  std::set<Edge> drawn;
  while (split.test_neg_edges.size() < held) {
    const int u = static_cast<int>(uniform_below(neg_rng, n));
    const int v = static_cast<int>(uniform_below(neg_rng, n));
    if (u == v || graph.has_edge(u, v)) continue;
    if (drawn.insert(ordered(u, v)).second) split.test_neg_edges.push_back(ordered(u, v));
  }
  return split;
}

FewShotSplit split_few_shot(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 1) throw ArgumentError("k-shots must be >= 1");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by_class[labels[i]].push_back(static_cast<int>(i));
  }
  FewShotSplit split;
  split.k = k;
  split.seed = seed;
  Engine rng(seed);
  for (auto& [label, members] : by_class) {
    shuffle(std::span<int>(members), rng);
    const auto take = std::min(members.size(), static_cast<std::size_t>(k));
    split.train_ids.insert(split.train_ids.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    split.test_ids.insert(split.test_ids.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

std::vector<double> score_links(const Mat& table, std::span<const Edge> pairs, LinkScorer scorer,
                                std::span<const SpaceSpec> factors) {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  if (scorer == LinkScorer::dot) {
    for (const auto& [u, v] : pairs) {
      check_row(table, u);
      check_row(table, v);
      scores.push_back(table.row(u).dot(table.row(v)));
    }
    return scores;
  }

  int width = 0;
  for (const SpaceSpec& f : factors) width += f.dim();
  if (factors.empty() || width != table.cols()) {
    throw DimensionError(fmt::format("distance scorer: factors cover {} columns, table has {}", width, table.cols()));
  }
  // Points per (node, factor), computed on first use.
  std::vector<std::vector<std::optional<CurvedPoint>>> points(factors.size(),
                                                              std::vector<std::optional<CurvedPoint>>(table.rows()));
  auto point = [&](std::size_t f, int node, int offset) -> const CurvedPoint& {
    auto& slot = points[f][static_cast<std::size_t>(node)];
    if (!slot) {
      const SpaceSpec& spec = factors[f];
      const CurvedPoint pole = north_pole(spec);
      Vec v = Vec::Zero(spec.ambient_dim());
      v.tail(spec.dim()) = table.row(node).segment(offset, spec.dim()).transpose();
      slot = exp_map(pole, TangentVector::unchecked(pole, v), spec);
    }
    return *slot;
  };
  for (const auto& [u, v] : pairs) {
    check_row(table, u);
    check_row(table, v);
    double total = 0.0;
    int offset = 0;
    for (std::size_t f = 0; f < factors.size(); ++f) {
      total += geodesic_distance(point(f, u, offset), point(f, v, offset), factors[f]);
      offset += factors[f].dim();
    }
    scores.push_back(-total);
  }
  return scores;
}

Ranking auc_ap(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) throw ArgumentError("auc_ap needs positive and negative scores");
  std::vector<std::pair<double, bool>> all;
  for (double s : pos_scores) all.emplace_back(s, true);
  for (double s : neg_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const auto num_pos = static_cast<double>(pos_scores.size());
  const auto num_neg = static_cast<double>(neg_scores.size());
  double wins = 0.0;
  double ap = 0.0;
  double pos_above = 0.0;
  double seen = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    double group_pos = 0.0;
    double group_neg = 0.0;
    while (j < all.size() && all[j].first == all[i].first) {
      (all[j].second ? group_pos : group_neg) += 1.0;
      ++j;
    }
    // Negatives in this group lose to every positive above and tie with the group's positives.
    wins += group_neg * (pos_above + 0.5 * group_pos);
    pos_above += group_pos;
    seen += group_pos + group_neg;
    ap += (group_pos / num_pos) * (pos_above / seen);
    i = j;
  }
  return {wins / (num_pos * num_neg), ap};
}

double weighted_f1(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("weighted_f1: truth and predictions differ in length");
  if (truth.empty()) throw ArgumentError("weighted_f1 over an empty set");
  std::map<int, double> support, tp, predicted_count;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    support[truth[i]] += 1.0;
    predicted_count[predicted[i]] += 1.0;
    if (truth[i] == predicted[i]) tp[truth[i]] += 1.0;
  }
  double total = 0.0;
  for (const auto& [label, count] : support) {
    const double hits = tp[label];
    const double denom = count + predicted_count[label];
    total += count * (denom > 0.0 ? 2.0 * hits / denom : 0.0);
  }
  return total / static_cast<double>(truth.size());
}

Classification classify_nodes(const Mat& table, std::span<const int> labels, const FewShotSplit& split,
                              const HeadConfig& head) {
  if (labels.size() != static_cast<std::size_t>(table.rows())) {
    throw DimensionError(fmt::format("{} labels for {} embedding rows", labels.size(), table.rows()));
  }
  if (split.train_ids.empty() || split.test_ids.empty()) throw ArgumentError("few-shot split has no train or test nodes");
  if (head.epochs < 0 || !(head.learning_rate > 0.0) || head.l2 < 0.0) throw ArgumentError("invalid head configuration");
  for (int id : split.train_ids) check_row(table, id);
  for (int id : split.test_ids) check_row(table, id);

  std::vector<int> classes;
  for (int id : split.train_ids) classes.push_back(labels[static_cast<std::size_t>(id)]);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (int id : split.test_ids) {
    const int label = labels[static_cast<std::size_t>(id)];
    if (!std::binary_search(classes.begin(), classes.end(), label)) {
      spdlog::warn("class {} has no training node; the head cannot predict it", label);
    }
  }

  const auto n = static_cast<Eigen::Index>(split.train_ids.size());
  const auto c = static_cast<Eigen::Index>(classes.size());
  Mat x(n, table.cols());
  Mat y = Mat::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = split.train_ids[static_cast<std::size_t>(i)];
    x.row(i) = table.row(id);
    const auto pos = std::lower_bound(classes.begin(), classes.end(), labels[static_cast<std::size_t>(id)]);
    y(i, pos - classes.begin()) = 1.0;
  }

  auto softmax_rows = [](Mat logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      logits.row(i).array() -= logits.row(i).maxCoeff();
      logits.row(i) = logits.row(i).array().exp().matrix();
      logits.row(i) /= logits.row(i).sum();
    }
    return logits;
  };
  Mat w = Mat::Zero(table.cols(), c);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(c);
  for (int epoch = 0; epoch < head.epochs; ++epoch) {
    Mat logits = x * w;
    logits.rowwise() += b;
    const Mat err = (softmax_rows(std::move(logits)) - y) / static_cast<double>(n);
    w -= head.learning_rate * (x.transpose() * err + head.l2 * w);
    b -= head.learning_rate * err.colwise().sum();
  }

  Classification result{0.0, 0.0, {}};
  std::vector<int> truth;
  for (int id : split.test_ids) {
    Eigen::RowVectorXd logits = table.row(id) * w + b;
    Eigen::Index best;
    logits.maxCoeff(&best);
    result.predictions.push_back(classes[static_cast<std::size_t>(best)]);
    truth.push_back(labels[static_cast<std::size_t>(id)]);
  }
  double hits = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == result.predictions[i] ? 1.0 : 0.0;
  result.accuracy = hits / static_cast<double>(truth.size());
  result.weighted_f1 = weighted_f1(truth, result.predictions);
  return result;
}

void write_metrics_text(std::ostream& out, const Metrics& metrics) {
  auto line = [&](const char* key, const std::optional<double>& x) {
    if (x) out << fmt::format("{} = {:.17g}\n", key, *x);
  };
  line("auc", metrics.auc);
  line("ap", metrics.ap);
  line("acc", metrics.acc);
  line("weighted_f1", metrics.weighted_f1);
  out << "seed = " << metrics.seed << '\n';
  if (metrics.k) out << "k = " << *metrics.k << '\n';
  for (const auto& [key, value] : metrics.config) out << "config." << key << " = " << value << '\n';
}

void write_metrics_json(std::ostream& out, const Metrics& metrics) {
  // Built by hand so the field order is fixed.
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [key, value] : metrics.config) config[key] = value;
  out << "{\"auc\": " << json_number(metrics.auc) << ", \"ap\": " << json_number(metrics.ap)
      << ", \"acc\": " << json_number(metrics.acc) << ", \"weighted_f1\": " << json_number(metrics.weighted_f1)
      << ", \"seed\": " << metrics.seed << ", \"k\": " << (metrics.k ? std::to_string(*metrics.k) : "null")
      << ", \"config\": " << config.dump() << "}\n";
}

}  // namespace rgfm
