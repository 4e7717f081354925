// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gfolds/graph.hpp"
#include "gfolds/vocab.hpp"

namespace gfolds {

// One graph per line:
//   {"id": str, "htop": int,
//    "nodes": [{"label": str, "features": [str], "oov": bool}],
//    "edges": [{"src": int, "dst": int, "label": str}]}
// "features" and "oov" may be omitted. Blank lines are skipped. Every error
// is a ParseError carrying the 1-based line number.
std::vector<RawGraph> read_raw_jsonl(std::istream& in);
std::vector<RawGraph> read_raw_jsonl(const std::filesystem::path& path);

void write_raw_jsonl(std::ostream& out, std::span<const RawGraph> graphs);
void write_raw_jsonl(const std::filesystem::path& path, std::span<const RawGraph> graphs);

// Model-ready graphs are stored in the same schema with vocabulary strings.
// Reading runs preprocess, which is the identity on preprocessed graphs.
std::vector<GraphDoc> read_doc_jsonl(const std::filesystem::path& path, const Vocabulary& vocab);
void write_doc_jsonl(const std::filesystem::path& path, std::span<const GraphDoc> docs,
                     const Vocabulary& vocab);

std::string raw_graph_to_json(const RawGraph& graph);
// Throws SchemaError (not ParseError) since there is no line context.
RawGraph raw_graph_from_json(std::string_view text);

}  // namespace gfolds
