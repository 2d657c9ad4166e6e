#include "rgfm/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "rgfm/errors.hpp"

namespace rgfm {

namespace {

std::string_view strip_comment(std::string_view line) {
  if (auto pos = line.find('#'); pos != std::string_view::npos) line = line.substr(0, pos);
  return line;
}

// Parses whitespace-separated nonnegative integers; nullopt on any junk.
std::optional<std::vector<long long>> parse_ints(std::string_view line) {
  std::vector<long long> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i == line.size()) break;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), value);
    if (ec != std::errc() || value < 0) return std::nullopt;
    const std::size_t next = static_cast<std::size_t>(ptr - line.data());
    if (next < line.size() && line[next] != ' ' && line[next] != '\t' && line[next] != '\r') {
      return std::nullopt;
    }
    out.push_back(value);
    i = next;
  }
  return out;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError(fmt::format("no such file '{}'", path.string()));
  std::ifstream in(path);
  if (!in) throw ArgumentError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

}  // namespace

Graph Graph::from_edges(int num_nodes, std::span<const Edge> edges) {
  if (num_nodes < 0) throw ArgumentError("negative node count");
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw ArgumentError(fmt::format("edge ({}, {}) outside [0, {})", u, v, num_nodes));
    }
    if (u == v) continue;
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  Graph g;
  g.num_nodes_ = num_nodes;
  g.offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  g.targets_.reserve(directed.size());
  for (auto [u, v] : directed) {
    ++g.offsets_[u + 1];
    g.targets_.push_back(v);
  }
  for (int u = 0; u < num_nodes; ++u) g.offsets_[u + 1] += g.offsets_[u];
  return g;
}

bool Graph::has_edge(int u, int v) const {
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (int u = 0; u < num_nodes_; ++u) {
    for (int v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

void Graph::set_labels(std::vector<int> labels) {
  if (static_cast<int>(labels.size()) != num_nodes_) {
    throw ArgumentError(fmt::format("{} labels for {} nodes", labels.size(), num_nodes_));
  }
  labels_ = std::move(labels);
}

void Graph::set_features(Eigen::MatrixXd features) {
  if (features.rows() != num_nodes_) {
    throw ArgumentError(fmt::format("{} feature rows for {} nodes", features.rows(), num_nodes_));
  }
  features_ = std::move(features);
}

Graph load_edge_list(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<Edge> edges;
  int max_id = -1;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    auto body = strip_comment(line);
    auto ints = parse_ints(body);
    if (!ints) {
      throw FormatError(fmt::format("{}:{}: expected \"u v\" with nonnegative integers", path.string(),
                                    line_no));
    }
    if (ints->empty()) continue;
    if (ints->size() != 2 || (*ints)[0] > INT32_MAX || (*ints)[1] > INT32_MAX) {
      throw FormatError(fmt::format("{}:{}: expected exactly two node ids", path.string(), line_no));
    }
    const int u = static_cast<int>((*ints)[0]);
    const int v = static_cast<int>((*ints)[1]);
    edges.emplace_back(u, v);
    max_id = std::max({max_id, u, v});
  }
  return Graph::from_edges(max_id + 1, edges);
}

std::vector<int> load_labels(const std::filesystem::path& path, int num_nodes) {
  auto in = open_or_throw(path);
  std::vector<int> labels(static_cast<std::size_t>(num_nodes), -1);
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    auto ints = parse_ints(strip_comment(line));
    if (!ints) {
      throw FormatError(fmt::format("{}:{}: expected \"node_id class_id\"", path.string(), line_no));
    }
    if (ints->empty()) continue;
    if (ints->size() != 2 || (*ints)[1] > INT32_MAX) {
      throw FormatError(fmt::format("{}:{}: expected exactly two integers", path.string(), line_no));
    }
    if ((*ints)[0] >= num_nodes) {
      throw FormatError(fmt::format("{}:{}: node {} outside the graph ({} nodes)", path.string(),
                                    line_no, (*ints)[0], num_nodes));
    }
    labels[static_cast<std::size_t>((*ints)[0])] = static_cast<int>((*ints)[1]);
  }
  return labels;
}

}  // namespace rgfm
