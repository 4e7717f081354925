// SPDX-License-Identifier: Apache-2.0
#include "gfolds/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "gfolds/errors.hpp"

namespace gfolds {

Vocabulary::Vocabulary() : Vocabulary({}, {}) {}

Vocabulary::Vocabulary(std::vector<std::string> predicates, std::vector<std::string> features) {
  tokens_ = {std::string(kPadToken), std::string(kMaskToken), std::string(kIfXThenToken)};
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    token_index_.emplace(tokens_[i], static_cast<TokenId>(i));
  }
  for (auto& p : predicates) {
    if (token_index_.contains(p)) {
      throw ConfigError("vocabulary: duplicate or reserved predicate '" + p + "'");
    }
    token_index_.emplace(p, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(p));
  }
  for (auto& f : features) {
    if (feature_index_.contains(f)) {
      throw ConfigError("vocabulary: duplicate feature '" + f + "'");
    }
    feature_index_.emplace(f, static_cast<FeatureId>(features_.size()));
    features_.push_back(std::move(f));
  }
}

std::optional<TokenId> Vocabulary::token_id(std::string_view label) const {
  const auto it = token_index_.find(std::string(label));
  if (it == token_index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary: token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<FeatureId> Vocabulary::feature_id(std::string_view feature) const {
  const auto it = feature_index_.find(std::string(feature));
  if (it == feature_index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

const std::string& Vocabulary::feature(FeatureId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= features_.size()) {
    throw IndexError("vocabulary: feature id " + std::to_string(id) + " out of range");
  }
  return features_[static_cast<std::size_t>(id)];
}

std::string_view Vocabulary::edge_label(EdgeLabelId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= kEdgeLabels.size()) {
    throw IndexError("vocabulary: edge label id " + std::to_string(id) + " out of range");
  }
  return kEdgeLabels[static_cast<std::size_t>(id)];
}

void Vocabulary::write(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << (i < static_cast<std::size_t>(kNumReserved) ? "special" : "pred") << '\t' << tokens_[i]
        << '\t' << i << '\n';
  }
  for (std::size_t i = 0; i < features_.size(); ++i) {
    out << "feat\t" << features_[i] << '\t' << i << '\n';
  }
  for (std::size_t i = 0; i < kEdgeLabels.size(); ++i) {
    out << "edge\t" << kEdgeLabels[i] << '\t' << i << '\n';
  }
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::vector<std::string> preds;
  std::vector<std::string> feats;
  std::string line;
  std::size_t lineno = 0;
  std::size_t specials = 0;
  std::size_t edges = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw ParseError(lineno, "vocabulary: expected kind<TAB>string<TAB>id");
    }
    const std::string kind = line.substr(0, t1);
    std::string text = line.substr(t1 + 1, t2 - t1 - 1);
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoull(line.substr(t2 + 1), &used);
      if (used != line.size() - t2 - 1) {
        throw std::invalid_argument("trailing");
      }
    } catch (const std::exception&) {
      throw ParseError(lineno, "vocabulary: bad id '" + line.substr(t2 + 1) + "'");
    }
    auto expect = [&](std::size_t want) {
      if (id != want) {
        throw ParseError(lineno, "vocabulary: " + kind + " '" + text + "' has id " +
                                     std::to_string(id) + ", expected " + std::to_string(want));
      }
    };
    if (kind == "special") {
      expect(specials);
      const std::string_view want[] = {kPadToken, kMaskToken, kIfXThenToken};
      if (specials >= 3 || text != want[specials]) {
        throw ParseError(lineno, "vocabulary: unexpected reserved entry '" + text + "'");
      }
      ++specials;
    } else if (kind == "pred") {
      expect(kNumReserved + preds.size());
      preds.push_back(std::move(text));
    } else if (kind == "feat") {
      expect(feats.size());
      feats.push_back(std::move(text));
    } else if (kind == "edge") {
      expect(edges);
      if (edges >= kEdgeLabels.size() || text != kEdgeLabels[edges]) {
        throw ParseError(lineno, "vocabulary: edge label '" + text + "' does not match inventory");
      }
      ++edges;
    } else {
      throw ParseError(lineno, "vocabulary: unknown entry kind '" + kind + "'");
    }
  }
  if (specials != 3) {
    throw ParseError(lineno, "vocabulary: missing reserved entries");
  }
  try {
    return Vocabulary(std::move(preds), std::move(feats));
  } catch (const ConfigError& e) {
    throw ParseError(lineno, e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw FormatError("vocabulary: cannot create " + path.string());
  }
  write(out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("vocabulary: cannot open " + path.string());
  }
  return read(in);
}

Vocabulary build_vocabulary(std::span<const RawGraph> corpus) {
  if (corpus.empty()) {
    throw ConfigError("build_vocabulary: empty corpus");
  }
  std::set<std::string> preds;
  std::set<std::string> feats;
  for (const auto& g : corpus) {
    for (const auto& n : g.nodes) {
      if (!n.oov && n.label != Vocabulary::kMaskToken && n.label != Vocabulary::kPadToken &&
          n.label != Vocabulary::kIfXThenToken) {
        preds.insert(n.label);
      }
      feats.insert(n.features.begin(), n.features.end());
    }
  }
  if (preds.empty()) {
    throw ConfigError("build_vocabulary: corpus contains no in-vocabulary predicate");
  }
  return Vocabulary(std::vector<std::string>(preds.begin(), preds.end()),
                    std::vector<std::string>(feats.begin(), feats.end()));
}

}  // namespace gfolds
