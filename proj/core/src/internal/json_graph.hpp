// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>

#include <nlohmann/json.hpp>

#include "gfolds/graph.hpp"

namespace gfolds::detail {

// Throws SchemaError on a missing or mistyped field, or an invalid graph.
RawGraph raw_graph_from_value(const nlohmann::json& value);
nlohmann::ordered_json raw_graph_to_value(const RawGraph& graph);

// Calls `fn` on every non-blank line parsed as JSON. Malformed JSON and any
// Error thrown by `fn` are rethrown as ParseError with the line number.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&)>& fn);

}  // namespace gfolds::detail
