// SPDX-License-Identifier: Apache-2.0
#include "gfolds/jsonl.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "gfolds/errors.hpp"
#include "gfolds/preprocess.hpp"
#include "internal/json_graph.hpp"

namespace gfolds {

namespace detail {

namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(where + ": missing field \"" + key + "\"");
  }
  return *it;
}

std::string as_string(const json& v, const std::string& what) {
  if (!v.is_string()) {
    throw SchemaError(what + " must be a string");
  }
  return v.get<std::string>();
}

std::size_t as_index(const json& v, const std::string& what) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0)) {
    throw SchemaError(what + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

const json& as_array(const json& v, const std::string& what) {
  if (!v.is_array()) {
    throw SchemaError(what + " must be an array");
  }
  return v;
}

}  // namespace

RawGraph raw_graph_from_value(const json& value) {
  if (!value.is_object()) {
    throw SchemaError("graph record must be a JSON object");
  }
  RawGraph g;
  g.id = as_string(field(value, "id", "graph"), "\"id\"");
  const std::string where = "graph '" + g.id + "'";
  g.htop = as_index(field(value, "htop", where), "\"htop\"");
  for (const auto& n : as_array(field(value, "nodes", where), "\"nodes\"")) {
    if (!n.is_object()) {
      throw SchemaError(where + ": node entries must be objects");
    }
    RawNode node;
    node.label = as_string(field(n, "label", where + " node"), "node \"label\"");
    if (const auto it = n.find("features"); it != n.end()) {
      for (const auto& f : as_array(*it, "node \"features\"")) {
        node.features.push_back(as_string(f, "feature"));
      }
    }
    if (const auto it = n.find("oov"); it != n.end()) {
      if (!it->is_boolean()) {
        throw SchemaError("node \"oov\" must be a boolean");
      }
      node.oov = it->get<bool>();
    }
    g.nodes.push_back(std::move(node));
  }
  for (const auto& e : as_array(field(value, "edges", where), "\"edges\"")) {
    if (!e.is_object()) {
      throw SchemaError(where + ": edge entries must be objects");
    }
    RawEdge edge;
    edge.src = as_index(field(e, "src", where + " edge"), "edge \"src\"");
    edge.dst = as_index(field(e, "dst", where + " edge"), "edge \"dst\"");
    edge.label = as_string(field(e, "label", where + " edge"), "edge \"label\"");
    g.edges.push_back(std::move(edge));
  }
  validate_raw(g);
  return g;
}

nlohmann::ordered_json raw_graph_to_value(const RawGraph& graph) {
  nlohmann::ordered_json out;
  out["id"] = graph.id;
  out["htop"] = graph.htop;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : graph.nodes) {
    nlohmann::ordered_json node;
    node["label"] = n.label;
    node["features"] = n.features;
    node["oov"] = n.oov;
    nodes.push_back(std::move(node));
  }
  out["nodes"] = std::move(nodes);
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : graph.edges) {
    nlohmann::ordered_json edge;
    edge["src"] = e.src;
    edge["dst"] = e.dst;
    edge["label"] = e.label;
    edges.push_back(std::move(edge));
  }
  out["edges"] = std::move(edges);
  return out;
}

void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    try {
      fn(value);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
}

}  // namespace detail

std::vector<RawGraph> read_raw_jsonl(std::istream& in) {
  std::vector<RawGraph> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    try {
      out.push_back(detail::raw_graph_from_value(value));
    } catch (const SchemaError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::vector<RawGraph> read_raw_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  return read_raw_jsonl(in);
}

void write_raw_jsonl(std::ostream& out, std::span<const RawGraph> graphs) {
  for (const auto& g : graphs) {
    out << detail::raw_graph_to_value(g).dump() << '\n';
  }
}

void write_raw_jsonl(const std::filesystem::path& path, std::span<const RawGraph> graphs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw FormatError("cannot create " + path.string());
  }
  write_raw_jsonl(out, graphs);
}

std::vector<GraphDoc> read_doc_jsonl(const std::filesystem::path& path, const Vocabulary& vocab) {
  const auto raws = read_raw_jsonl(path);
  std::vector<GraphDoc> docs;
  docs.reserve(raws.size());
  for (const auto& r : raws) {
    docs.push_back(preprocess(r, vocab));
  }
  return docs;
}

void write_doc_jsonl(const std::filesystem::path& path, std::span<const GraphDoc> docs,
                     const Vocabulary& vocab) {
  std::vector<RawGraph> raws;
  raws.reserve(docs.size());
  for (const auto& d : docs) {
    raws.push_back(to_raw(d, vocab));
  }
  write_raw_jsonl(path, raws);
}

std::string raw_graph_to_json(const RawGraph& graph) {
  return detail::raw_graph_to_value(graph).dump();
}

RawGraph raw_graph_from_json(std::string_view text) {
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  return detail::raw_graph_from_value(value);
}

}  // namespace gfolds
