// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>

#include "gfolds/graph.hpp"
#include "gfolds/vocab.hpp"

namespace gfolds {

// Remaps edge labels to the 8-label inventory, deletes focus_d/parg_d nodes
// with their incident edges, masks OOV/CARG nodes (features and edges kept),
// maps labels through the vocabulary and compacts node indices.
//
// Labels missing from the vocabulary are treated as OOV. Throws SchemaError
// when the raw graph is invalid, PreprocessError when htop is deleted or a
// feature is unknown.
GraphDoc preprocess(const RawGraph& raw, const Vocabulary& vocab);

// Index of raw node `node` after preprocessing; empty when the node is
// deleted (or out of range).
std::optional<std::size_t> preprocessed_index(const RawGraph& raw, std::size_t node);

// Inverse of the vocabulary mapping; masked nodes get the [MASK] label.
RawGraph to_raw(const GraphDoc& doc, const Vocabulary& vocab);

// Disjoint union of premise and hypothesis plus an if_x_then node wired
// ARG1 to the hypothesis htop and ARG2 to the premise htop. Premise nodes
// come first, then hypothesis nodes, then if_x_then, which becomes htop.
GraphDoc merge_premise_hypothesis(const GraphDoc& premise, const GraphDoc& hypothesis);

}  // namespace gfolds
