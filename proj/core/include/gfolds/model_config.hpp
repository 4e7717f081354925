// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gfolds/kv_config.hpp"

namespace gfolds {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t d_swa = 64;
  std::size_t n_swa_layers = 2;
  std::size_t n_encoder_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_inner_encoder = 256;
  std::size_t ff_inner_swa = 256;
  std::size_t vocab_size = 0;  // reserved ids included
  std::size_t n_features = 0;
  std::vector<std::string> edge_labels = default_edge_labels();
  double layer_norm_eps = 1e-12;
  double dropout = 0.0;

  static std::vector<std::string> default_edge_labels();

  // Two SWA layers and ten 8-head encoder layers at width 1024 with a
  // 22077-entry vocabulary. Inner feed-forward widths are 4x; the feature
  // inventory size is an assumption (32).
  static ModelConfig paper();

  // Throws ConfigError on non-positive extents, d_model not divisible by
  // n_heads, a bad eps or dropout, or duplicate/empty edge labels.
  void validate() const;

  // Keys: d_model, d_swa, n_swa_layers, n_encoder_layers, n_heads,
  // ff_inner_encoder, ff_inner_swa, vocab_size, n_features, edge_labels,
  // layer_norm_eps, dropout. Missing feed-forward widths default to 4x.
  KeyValueConfig to_kv() const;
  static ModelConfig from_kv(const KeyValueConfig& kv);
  static const std::vector<std::string_view>& kv_keys();

  bool operator==(const ModelConfig&) const = default;
};

struct ParamGroup {
  std::string name;
  std::size_t count = 0;
};

struct ParamCount {
  std::size_t total = 0;
  std::vector<ParamGroup> groups;
  // Parameters contributed by one edge label: 2 * n_swa_layers * d_swa^2.
  std::size_t per_edge_label = 0;
};

// Exact count of the tensors GfoldsModel creates for `config` (classifier
// head included when num_classes > 0).
ParamCount count_parameters(const ModelConfig& config, std::size_t num_classes = 0);

}  // namespace gfolds
