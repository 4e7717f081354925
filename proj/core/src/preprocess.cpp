// SPDX-License-Identifier: Apache-2.0
#include "gfolds/preprocess.hpp"

#include <algorithm>
#include <limits>

#include "gfolds/errors.hpp"

namespace gfolds {

namespace {

bool is_discourse(const std::string& label) {
  return std::find(kDiscoursePredicates.begin(), kDiscoursePredicates.end(), label) !=
         kDiscoursePredicates.end();
}

}  // namespace

GraphDoc preprocess(const RawGraph& raw, const Vocabulary& vocab) {
  validate_raw(raw);
  constexpr std::size_t kDropped = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> remap(raw.nodes.size(), kDropped);
  GraphDoc doc;
  doc.id = raw.id;
  for (std::size_t i = 0; i < raw.nodes.size(); ++i) {
    const auto& node = raw.nodes[i];
    if (is_discourse(node.label)) {
      continue;
    }
    if (node.label == Vocabulary::kPadToken) {
      throw SchemaError("graph '" + raw.id + "': node " + std::to_string(i) +
                        " carries the reserved [PAD] label");
    }
    GraphNode out;
    if (node.oov) {
      out.label = Vocabulary::kMask;
    } else {
      out.label = vocab.token_id(node.label).value_or(Vocabulary::kMask);
    }
    for (const auto& f : node.features) {
      const auto id = vocab.feature_id(f);
      if (!id) {
        throw PreprocessError("graph '" + raw.id + "': unknown feature '" + f + "' on node " +
                              std::to_string(i));
      }
      out.features.push_back(*id);
    }
    std::sort(out.features.begin(), out.features.end());
    out.features.erase(std::unique(out.features.begin(), out.features.end()), out.features.end());
    remap[i] = doc.nodes.size();
    doc.nodes.push_back(std::move(out));
  }
  if (remap[raw.htop] == kDropped) {
    throw PreprocessError("graph '" + raw.id + "': htop node " + std::to_string(raw.htop) +
                          " is a removed " + raw.nodes[raw.htop].label + " node");
  }
  doc.htop = remap[raw.htop];
  for (const auto& e : raw.edges) {
    if (remap[e.src] == kDropped || remap[e.dst] == kDropped) {
      continue;
    }
    doc.edges.push_back({remap[e.src], remap[e.dst], *remap_edge_label(e.label)});
  }
  return doc;
}

std::optional<std::size_t> preprocessed_index(const RawGraph& raw, std::size_t node) {
  if (node >= raw.nodes.size() || is_discourse(raw.nodes[node].label)) {
    return std::nullopt;
  }
  std::size_t kept = 0;
  for (std::size_t i = 0; i < node; ++i) {
    kept += !is_discourse(raw.nodes[i].label);
  }
  return kept;
}

RawGraph to_raw(const GraphDoc& doc, const Vocabulary& vocab) {
  RawGraph raw;
  raw.id = doc.id;
  raw.htop = doc.htop;
  raw.nodes.reserve(doc.nodes.size());
  for (const auto& n : doc.nodes) {
    RawNode out;
    out.label = vocab.token(n.label);
    for (FeatureId f : n.features) {
      out.features.push_back(vocab.feature(f));
    }
    raw.nodes.push_back(std::move(out));
  }
  raw.edges.reserve(doc.edges.size());
  for (const auto& e : doc.edges) {
    raw.edges.push_back({e.src, e.dst, std::string(Vocabulary::edge_label(e.label))});
  }
  return raw;
}

GraphDoc merge_premise_hypothesis(const GraphDoc& premise, const GraphDoc& hypothesis) {
  if (premise.nodes.empty() || hypothesis.nodes.empty()) {
    throw PreprocessError("merge: premise and hypothesis must both be non-empty");
  }
  if (premise.htop >= premise.nodes.size() || hypothesis.htop >= hypothesis.nodes.size()) {
    throw SchemaError("merge: htop is not a node index");
  }
  const std::size_t offset = premise.nodes.size();
  GraphDoc out;
  out.id = premise.id + "+" + hypothesis.id;
  out.nodes = premise.nodes;
  out.nodes.insert(out.nodes.end(), hypothesis.nodes.begin(), hypothesis.nodes.end());
  out.edges = premise.edges;
  for (const auto& e : hypothesis.edges) {
    out.edges.push_back({e.src + offset, e.dst + offset, e.label});
  }
  const std::size_t root = out.nodes.size();
  out.nodes.push_back({Vocabulary::kIfXThen, {}});
  out.edges.push_back({root, hypothesis.htop + offset, edge::kArg1});
  out.edges.push_back({root, premise.htop, edge::kArg2});
  out.htop = root;
  return out;
}

}  // namespace gfolds
