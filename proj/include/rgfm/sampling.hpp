#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rgfm/graph.hpp"

namespace rgfm {

enum class SubstructureKind { tree, cycle };

/// One sampled element of the structural vocabulary.
///
/// Trees list their nodes in BFS order (anchor first) with per-position
/// parent index and depth. Cycles list their nodes in ring order, anchor
/// first. A degenerate cycle is the fallback for anchors on no 3- or 4-cycle:
/// the anchor plus one neighbor (or the anchor alone when isolated); it is
/// aggregated with uniform weights.
struct Substructure {
  SubstructureKind kind = SubstructureKind::tree;
  int anchor = -1;
  std::vector<int> nodes;
  std::vector<Edge> edges;      // parent->child for trees, consecutive ring pairs for cycles
  std::vector<int> parents;     // trees: position of parent, -1 for the root
  std::vector<int> levels;      // trees: depth of each position
  bool degenerate = false;

  int size() const { return static_cast<int>(nodes.size()); }
  bool operator==(const Substructure&) const = default;
};

struct TreeSampling {
  int depth = 2;
  int branch_cap = 5;
  int samples_per_anchor = 3;
};

/// BFS trees rooted at each anchor; every child set is subsampled uniformly
/// without replacement to branch_cap. Identical draws for one anchor are
/// reported once, so simple neighborhoods yield a single tree.
std::vector<Substructure> sample_trees(const Graph& g, std::span<const int> anchors,
                                       const TreeSampling& sampling, std::uint64_t seed);

/// Up to samples_per_anchor distinct triangles or quadrilaterals through each
/// anchor, drawn uniformly from all of them. Anchors on none get one
/// degenerate ring.
std::vector<Substructure> sample_cycles(const Graph& g, std::span<const int> anchors,
                                        int samples_per_anchor, std::uint64_t seed);

/// Every 3- and 4-cycle through the anchor in ring order (anchor first).
/// Quadrilaterals are not required to be chordless.
std::vector<std::vector<int>> enumerate_cycles(const Graph& g, int anchor);

/// Throws ArgumentError if the substructure breaks its invariants
/// (edges in the graph, tree shape and depth, ring closure).
void validate_substructure(const Substructure& sub, const Graph& g, int max_depth);

}  // namespace rgfm
