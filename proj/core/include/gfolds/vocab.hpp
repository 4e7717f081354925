// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gfolds/graph.hpp"

namespace gfolds {

// Token ids: reserved entries first, then predicates in lexicographic order.
// Features and edge labels have their own id spaces.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kIfXThen = 2;
  static constexpr TokenId kNumReserved = 3;
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kMaskToken = "[MASK]";
  static constexpr std::string_view kIfXThenToken = "if_x_then";

  Vocabulary();
  Vocabulary(std::vector<std::string> predicates, std::vector<std::string> features);

  std::optional<TokenId> token_id(std::string_view label) const;
  const std::string& token(TokenId id) const;
  std::optional<FeatureId> feature_id(std::string_view feature) const;
  const std::string& feature(FeatureId id) const;
  static std::optional<EdgeLabelId> edge_label_id(std::string_view label) {
    return gfolds::edge_label_id(label);
  }
  static std::string_view edge_label(EdgeLabelId id);

  // Reserved entries included.
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t num_predicates() const noexcept { return tokens_.size() - kNumReserved; }
  std::size_t num_features() const noexcept { return features_.size(); }
  static constexpr std::size_t num_edge_labels() noexcept { return kEdgeLabels.size(); }

  static bool is_reserved(TokenId id) noexcept { return id >= 0 && id < kNumReserved; }

  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && features_ == other.features_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> features_;
  std::unordered_map<std::string, TokenId> token_index_;
  std::unordered_map<std::string, FeatureId> feature_index_;
};

// Collects every non-OOV predicate and every feature string. Throws
// ConfigError on an empty corpus or one with no usable predicate.
Vocabulary build_vocabulary(std::span<const RawGraph> corpus);

}  // namespace gfolds
