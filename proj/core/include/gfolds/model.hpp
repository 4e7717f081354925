// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gfolds/graph.hpp"
#include "gfolds/model_config.hpp"
#include "gfolds/param_store.hpp"
#include "gfolds/rng.hpp"
#include "gfolds/tensor.hpp"

namespace gfolds {

// Graphs padded to a common width and flattened to rows: node j of graph g
// is row g * width + j. Padding rows carry [PAD], no features and no edges.
struct GraphBatch {
  std::size_t batch_size = 0;
  std::size_t width = 0;
  std::vector<TokenId> labels;
  std::vector<std::uint8_t> valid;
  std::vector<std::size_t> node_counts;
  // One entry per (node, feature) pair, ordered by row then feature id.
  std::vector<std::size_t> feature_rows;
  std::vector<std::int32_t> feature_ids;
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  std::vector<EdgeLabelId> edge_labels;

  std::size_t rows() const noexcept { return batch_size * width; }
  std::size_t row(std::size_t graph, std::size_t node) const noexcept {
    return graph * width + node;
  }
};

// width 0 means the largest graph. Throws EmptyBatchError on no graphs,
// DimensionError when a graph exceeds `width`, SchemaError on an invalid
// graph.
GraphBatch make_batch(std::span<const GraphDoc> graphs, std::size_t width = 0);

struct ForwardOptions {
  bool train = false;           // enables dropout when the config sets it
  Rng* rng = nullptr;           // dropout stream; required when dropping
  bool zero_positional = false;  // encoder input is the embedding alone
};

// The graph network: feature-summed node embeddings, a positional encoding
// network of edge-label-parameterized aggregation layers, a pre-norm
// transformer encoder with padding-only attention masks, a masked-node
// prediction head and an optional mean-pooled classifier.
template <class T>
class GfoldsModel {
 public:
  using TensorT = BasicTensor<T>;

  // Fresh parameters drawn from streams derived from `seed`.
  GfoldsModel(ModelConfig config, std::uint64_t seed);
  // Adopts `params`; every expected tensor must be present with the right
  // shape (ConfigError otherwise). Extra tensors are rejected.
  GfoldsModel(ModelConfig config, ParamStore<T> params);

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }

  // [rows, d_model]
  TensorT embed_nodes(const GraphBatch& batch) const;
  // One aggregation layer over h [rows, d_swa].
  TensorT swa_layer(std::size_t layer, const TensorT& h, const GraphBatch& batch) const;
  // [rows, d_model] -> [rows, d_model]
  TensorT positional_encoding(const TensorT& e, const GraphBatch& batch) const;
  // x [batch_size * width, d_model]; valid has one flag per row.
  TensorT encoder_forward(const TensorT& x, std::span<const std::uint8_t> valid,
                          std::size_t batch_size, std::size_t width,
                          const ForwardOptions& options = {}) const;
  TensorT encoder_forward(const TensorT& x, const GraphBatch& batch,
                          const ForwardOptions& options = {}) const;
  // Full encoder pass: embed, positional encoding, encoder stack.
  TensorT encode(const GraphBatch& batch, const ForwardOptions& options = {}) const;

  // [n, d_model] -> [n, vocab_size]
  TensorT mnm_logits(const TensorT& h) const;

  // Mean over valid rows of each graph: [batch_size, d_model]. Throws
  // EmptyBatchError if some graph has no valid row.
  TensorT mean_pool(const TensorT& h, const GraphBatch& batch) const;
  // [batch_size, num_classes]
  TensorT classify(const TensorT& h, const GraphBatch& batch) const;

  void add_classifier(std::size_t num_classes, std::uint64_t seed);
  bool has_classifier() const { return num_classes_ > 0; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  // Names of tensors belonging to a head ("mnm." / "cls." prefixes).
  static bool is_mnm_param(const std::string& name);
  static bool is_classifier_param(const std::string& name);

  template <class U>
  GfoldsModel<U> cast() const {
    return GfoldsModel<U>(config_, params_.template cast<U>());
  }

 private:
  const TensorT& p(const std::string& name) const { return params_.get(name); }
  TensorT feed_forward(const std::string& prefix, const TensorT& x) const;
  TensorT attention(std::size_t layer, const TensorT& h, std::span<const T> key_bias,
                    std::size_t batch_size, std::size_t width) const;

  ModelConfig config_;
  ParamStore<T> params_;
  std::size_t num_classes_ = 0;
};

// Expected tensor names and shapes, in creation order.
std::vector<std::pair<std::string, Shape>> model_param_shapes(const ModelConfig& config,
                                                              std::size_t num_classes = 0);

}  // namespace gfolds
