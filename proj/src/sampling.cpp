#include "rgfm/sampling.hpp"

#include <algorithm>
#include <array>
#include <fmt/format.h>

#include "rgfm/errors.hpp"
#include "rgfm/rng.hpp"

namespace rgfm {

namespace {

constexpr std::uint64_t kTreeStream = 0x7472;
constexpr std::uint64_t kCycleStream = 0x6379;

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

Substructure bfs_tree(const Graph& g, int anchor, const TreeSampling& sampling, Engine& rng) {
  Substructure t;
  t.kind = SubstructureKind::tree;
  t.anchor = anchor;
  t.nodes = {anchor};
  t.parents = {-1};
  t.levels = {0};
  std::size_t level_begin = 0;
  for (int depth = 1; depth <= sampling.depth; ++depth) {
    const std::size_t level_end = t.nodes.size();
    for (std::size_t pos = level_begin; pos < level_end; ++pos) {
      std::vector<int> candidates;
      for (int v : g.neighbors(t.nodes[pos])) {
        if (!contains(t.nodes, v)) candidates.push_back(v);
      }
      if (static_cast<int>(candidates.size()) > sampling.branch_cap) {
        // Partial Fisher-Yates: the first branch_cap slots become a uniform subset.
        for (int i = 0; i < sampling.branch_cap; ++i) {
          const auto j = i + uniform_below(rng, candidates.size() - i);
          std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(static_cast<std::size_t>(sampling.branch_cap));
        std::sort(candidates.begin(), candidates.end());
      }
      for (int v : candidates) {
        t.nodes.push_back(v);
        t.parents.push_back(static_cast<int>(pos));
        t.levels.push_back(depth);
        t.edges.emplace_back(t.nodes[pos], v);
      }
    }
    level_begin = level_end;
    if (level_begin == t.nodes.size()) break;
  }
  return t;
}

template <typename Visit>
void visit_cycles(const Graph& g, int a, Visit&& visit) {
  auto nb = g.neighbors(a);
  std::vector<int> common;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    for (std::size_t j = i + 1; j < nb.size(); ++j) {
      const int u = nb[i];
      const int v = nb[j];
      if (g.has_edge(u, v)) visit(std::array<int, 4>{a, u, v, -1}, 3);
      common.clear();
      auto nu = g.neighbors(u);
      auto nv = g.neighbors(v);
      std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
      for (int w : common) {
        if (w != a) visit(std::array<int, 4>{a, u, w, v}, 4);
      }
    }
  }
}

Substructure make_ring(int anchor, std::vector<int> nodes, bool degenerate) {
  Substructure c;
  c.kind = SubstructureKind::cycle;
  c.anchor = anchor;
  c.degenerate = degenerate;
  c.nodes = std::move(nodes);
  const int n = c.size();
  if (n >= 3) {
    for (int i = 0; i < n; ++i) c.edges.emplace_back(c.nodes[i], c.nodes[(i + 1) % n]);
  } else if (n == 2) {
    c.edges.emplace_back(c.nodes[0], c.nodes[1]);
  }
  return c;
}

}  // namespace

std::vector<Substructure> sample_trees(const Graph& g, std::span<const int> anchors,
                                       const TreeSampling& sampling, std::uint64_t seed) {
  if (sampling.depth < 1 || sampling.branch_cap < 1 || sampling.samples_per_anchor < 1) {
    throw ArgumentError("tree sampling needs depth, branch_cap and samples_per_anchor >= 1");
  }
  std::vector<Substructure> out;
  for (int anchor : anchors) {
    const std::size_t first = out.size();
    for (int s = 0; s < sampling.samples_per_anchor; ++s) {
      Engine rng(derive_seed(seed, {kTreeStream, static_cast<std::uint64_t>(anchor),
                                    static_cast<std::uint64_t>(s)}));
      Substructure t = bfs_tree(g, anchor, sampling, rng);
      const bool duplicate = std::any_of(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                                         [&](const Substructure& other) { return other == t; });
      if (!duplicate) out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<std::vector<int>> enumerate_cycles(const Graph& g, int anchor) {
  std::vector<std::vector<int>> out;
  visit_cycles(g, anchor, [&](const std::array<int, 4>& ring, int len) {
    out.emplace_back(ring.begin(), ring.begin() + len);
  });
  return out;
}

std::vector<Substructure> sample_cycles(const Graph& g, std::span<const int> anchors,
                                        int samples_per_anchor, std::uint64_t seed) {
  if (samples_per_anchor < 1) throw ArgumentError("samples_per_anchor must be >= 1");
  std::vector<Substructure> out;
  const auto k = static_cast<std::size_t>(samples_per_anchor);
  for (int anchor : anchors) {
    Engine rng(derive_seed(seed, {kCycleStream, static_cast<std::uint64_t>(anchor)}));
    // Reservoir sampling over the enumeration stream keeps memory at k rings.
    std::vector<std::pair<std::size_t, std::vector<int>>> reservoir;
    std::size_t seen = 0;
    visit_cycles(g, anchor, [&](const std::array<int, 4>& ring, int len) {
      std::vector<int> nodes(ring.begin(), ring.begin() + len);
      if (reservoir.size() < k) {
        reservoir.emplace_back(seen, std::move(nodes));
      } else {
        const auto j = uniform_below(rng, seen + 1);
        if (j < k) reservoir[j] = {seen, std::move(nodes)};
      }
      ++seen;
    });
    std::sort(reservoir.begin(), reservoir.end());
    for (auto& [index, nodes] : reservoir) out.push_back(make_ring(anchor, std::move(nodes), false));

    if (reservoir.empty()) {
      auto nb = g.neighbors(anchor);
      std::vector<int> nodes{anchor};
      if (!nb.empty()) nodes.push_back(nb[uniform_below(rng, nb.size())]);
      out.push_back(make_ring(anchor, std::move(nodes), true));
    }
  }
  return out;
}

void validate_substructure(const Substructure& sub, const Graph& g, int max_depth) {
  auto fail = [&](const std::string& why) {
    throw ArgumentError(fmt::format("invalid substructure anchored at {}: {}", sub.anchor, why));
  };
  if (sub.nodes.empty() || sub.nodes.front() != sub.anchor) fail("anchor must come first");
  for (int v : sub.nodes) {
    if (v < 0 || v >= g.num_nodes()) fail("node id out of range");
  }
  auto sorted = sub.nodes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) fail("repeated node");
  for (auto [u, v] : sub.edges) {
    if (!g.has_edge(u, v)) fail(fmt::format("edge ({}, {}) not in graph", u, v));
  }

  if (sub.kind == SubstructureKind::tree) {
    const auto n = sub.nodes.size();
    if (sub.parents.size() != n || sub.levels.size() != n) fail("parent/level arrays mismatch");
    if (sub.parents[0] != -1 || sub.levels[0] != 0) fail("root must have no parent");
    if (sub.edges.size() != n - 1) fail("a tree on n nodes has n - 1 edges");
    for (std::size_t i = 1; i < n; ++i) {
      const int p = sub.parents[i];
      if (p < 0 || static_cast<std::size_t>(p) >= i) fail("parents must precede children");
      if (sub.levels[i] != sub.levels[p] + 1) fail("level must be parent level + 1");
      if (sub.levels[i] > max_depth) fail("depth exceeds limit");
      if (!g.has_edge(sub.nodes[p], sub.nodes[i])) fail("parent-child pair is not an edge");
    }
    return;
  }

  const int n = sub.size();
  if (sub.degenerate) {
    if (n > 2) fail("degenerate rings have at most two nodes");
    if (n == 2 && !g.has_edge(sub.nodes[0], sub.nodes[1])) fail("fallback pair is not an edge");
    return;
  }
  if (n != 3 && n != 4) fail("cycles have length 3 or 4");
  for (int i = 0; i < n; ++i) {
    if (!g.has_edge(sub.nodes[i], sub.nodes[(i + 1) % n])) fail("ring is not closed in the graph");
  }
}

}  // namespace rgfm
