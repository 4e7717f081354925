// SPDX-License-Identifier: Apache-2.0
#include "gfolds/graph.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "gfolds/errors.hpp"

namespace gfolds {

std::optional<EdgeLabelId> edge_label_id(std::string_view label) noexcept {
  for (std::size_t i = 0; i < kEdgeLabels.size(); ++i) {
    if (kEdgeLabels[i] == label) {
      return static_cast<EdgeLabelId>(i);
    }
  }
  return std::nullopt;
}

std::optional<EdgeLabelId> remap_edge_label(std::string_view raw) noexcept {
  if (raw == "ARG") {
    return edge::kMod;
  }
  if (raw == "L-INDEX" || raw == "R-INDEX") {
    return edge::kIndex;
  }
  if (raw == "L-HNDL" || raw == "R-HNDL") {
    return edge::kHndl;
  }
  return edge_label_id(raw);
}

bool is_acyclic(std::size_t num_nodes,
                std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::size_t> indegree(num_nodes, 0);
  std::vector<std::vector<std::size_t>> out(num_nodes);
  for (const auto& [s, d] : edges) {
    out[s].push_back(d);
    ++indegree[d];
  }
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (indegree[i] == 0) {
      ready.push_back(i);
    }
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t n = ready.back();
    ready.pop_back();
    ++visited;
    for (std::size_t d : out[n]) {
      if (--indegree[d] == 0) {
        ready.push_back(d);
      }
    }
  }
  return visited == num_nodes;
}

namespace {

void check_structure(const std::string& id, std::size_t num_nodes, std::size_t htop,
                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const std::string where = "graph '" + id + "': ";
  if (num_nodes == 0) {
    throw SchemaError(where + "graph has no nodes");
  }
  if (htop >= num_nodes) {
    throw SchemaError(where + "htop " + std::to_string(htop) + " is not a node index");
  }
  for (const auto& [s, d] : pairs) {
    if (s >= num_nodes || d >= num_nodes) {
      throw SchemaError(where + "edge " + std::to_string(s) + "->" + std::to_string(d) +
                        " has an endpoint outside " + std::to_string(num_nodes) + " nodes");
    }
    if (s == d) {
      throw SchemaError(where + "self-loop on node " + std::to_string(s));
    }
  }
  if (!is_acyclic(num_nodes, pairs)) {
    throw SchemaError(where + "edges contain a cycle");
  }
}

}  // namespace

void validate_raw(const RawGraph& graph) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    if (!remap_edge_label(e.label)) {
      throw SchemaError("graph '" + graph.id + "': unknown edge label '" + e.label + "'");
    }
    pairs.emplace_back(e.src, e.dst);
  }
  check_structure(graph.id, graph.nodes.size(), graph.htop, pairs);
}

void validate_doc(const GraphDoc& graph, std::size_t num_edge_labels) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_edge_labels) {
      throw SchemaError("graph '" + graph.id + "': edge label id " + std::to_string(e.label) +
                        " outside inventory of " + std::to_string(num_edge_labels));
    }
    pairs.emplace_back(e.src, e.dst);
  }
  check_structure(graph.id, graph.nodes.size(), graph.htop, pairs);
}

GraphDoc permute_nodes(const GraphDoc& graph, std::span<const std::size_t> perm) {
  if (perm.size() != graph.nodes.size()) {
    throw DimensionError("permute_nodes: permutation of size " + std::to_string(perm.size()) +
                         " for " + std::to_string(graph.nodes.size()) + " nodes");
  }
  GraphDoc out;
  out.id = graph.id;
  out.nodes.resize(graph.nodes.size());
  std::vector<bool> hit(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || hit[perm[i]]) {
      throw IndexError("permute_nodes: not a permutation");
    }
    hit[perm[i]] = true;
    out.nodes[perm[i]] = graph.nodes[i];
  }
  out.edges.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    out.edges.push_back({perm[e.src], perm[e.dst], e.label});
  }
  out.htop = perm[graph.htop];
  return out;
}

bool same_graph(const GraphDoc& a, const GraphDoc& b) {
  if (a.nodes != b.nodes || a.htop != b.htop || a.edges.size() != b.edges.size()) {
    return false;
  }
  auto ea = a.edges;
  auto eb = b.edges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

bool isomorphic(const GraphDoc& a, const GraphDoc& b) {
  const std::size_t n = a.nodes.size();
  if (n != b.nodes.size() || a.edges.size() != b.edges.size()) {
    return false;
  }
  auto sorted_b = b.edges;
  std::sort(sorted_b.begin(), sorted_b.end());
  // Backtracking over node assignments that preserve label and features.
  std::vector<std::size_t> map(n, n);
  std::vector<bool> used(n, false);
  std::function<bool(std::size_t)> assign = [&](std::size_t i) -> bool {
    if (i == n) {
      if (map[a.htop] != b.htop) {
        return false;
      }
      std::vector<GraphEdge> mapped;
      mapped.reserve(a.edges.size());
      for (const auto& e : a.edges) {
        mapped.push_back({map[e.src], map[e.dst], e.label});
      }
      std::sort(mapped.begin(), mapped.end());
      return mapped == sorted_b;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!used[j] && a.nodes[i] == b.nodes[j]) {
        used[j] = true;
        map[i] = j;
        if (assign(i + 1)) {
          return true;
        }
        used[j] = false;
      }
    }
    return false;
  };
  return assign(0);
}

}  // namespace gfolds
