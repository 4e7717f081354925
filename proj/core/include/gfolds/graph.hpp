// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gfolds {

using TokenId = std::int32_t;
using FeatureId = std::int32_t;
using EdgeLabelId = std::int32_t;

// Edge labels after preprocessing, in id order.
inline constexpr std::array<std::string_view, 8> kEdgeLabels = {
    "ARG1", "ARG2", "ARG3", "ARG4", "MOD", "RSTR", "INDEX", "HNDL"};

namespace edge {
inline constexpr EdgeLabelId kArg1 = 0;
inline constexpr EdgeLabelId kArg2 = 1;
inline constexpr EdgeLabelId kArg3 = 2;
inline constexpr EdgeLabelId kArg4 = 3;
inline constexpr EdgeLabelId kMod = 4;
inline constexpr EdgeLabelId kRstr = 5;
inline constexpr EdgeLabelId kIndex = 6;
inline constexpr EdgeLabelId kHndl = 7;
}  // namespace edge

// DMRS edge labels accepted on raw input.
inline constexpr std::array<std::string_view, 11> kRawEdgeLabels = {
    "ARG1", "ARG2",    "ARG3",    "ARG4",   "MOD",   "RSTR",
    "ARG",  "L-INDEX", "R-INDEX", "L-HNDL", "R-HNDL"};

// Maps a raw label (or an already-remapped INDEX/HNDL) to its
// post-preprocessing id; nullopt for anything else.
std::optional<EdgeLabelId> remap_edge_label(std::string_view raw) noexcept;
std::optional<EdgeLabelId> edge_label_id(std::string_view label) noexcept;

// Predicates whose nodes are dropped during preprocessing.
inline constexpr std::array<std::string_view, 2> kDiscoursePredicates = {"focus_d", "parg_d"};

struct RawNode {
  std::string label;
  std::vector<std::string> features;
  bool oov = false;  // OOV item or CARG-bearing predicate

  bool operator==(const RawNode&) const = default;
};

struct RawEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::string label;

  bool operator==(const RawEdge&) const = default;
};

// A DMRS-derived graph with string labels, before vocabulary mapping.
struct RawGraph {
  std::string id;
  std::size_t htop = 0;
  std::vector<RawNode> nodes;
  std::vector<RawEdge> edges;

  bool operator==(const RawGraph&) const = default;
};

struct GraphNode {
  TokenId label = 0;
  std::vector<FeatureId> features;  // sorted, unique

  bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  EdgeLabelId label = 0;

  bool operator==(const GraphEdge&) const = default;
  auto operator<=>(const GraphEdge&) const = default;
};

// Model input graph: token-id labels, feature-id sets, labeled DAG edges.
struct GraphDoc {
  std::string id;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::size_t htop = 0;

  std::size_t size() const noexcept { return nodes.size(); }
  bool operator==(const GraphDoc&) const = default;
};

bool is_acyclic(std::size_t num_nodes, std::span<const std::pair<std::size_t, std::size_t>> edges);

// Throws SchemaError on bad endpoints, self-loops, cycles, a bad htop or an
// edge label outside the raw inventory.
void validate_raw(const RawGraph& graph);

// Throws SchemaError on bad endpoints, self-loops, cycles, a bad htop or an
// edge label id >= num_edge_labels.
void validate_doc(const GraphDoc& graph, std::size_t num_edge_labels = kEdgeLabels.size());

// Node i of `graph` becomes node perm[i] of the result.
GraphDoc permute_nodes(const GraphDoc& graph, std::span<const std::size_t> perm);

// Equality ignoring edge order (node order still matters).
bool same_graph(const GraphDoc& a, const GraphDoc& b);

// Exhaustive isomorphism test for small graphs (labels, features, edges and
// htop preserved); intended for tests and conformance checks.
bool isomorphic(const GraphDoc& a, const GraphDoc& b);

}  // namespace gfolds
