// SPDX-License-Identifier: Apache-2.0
#include "gfolds/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gfolds/errors.hpp"
#include "gfolds/ops.hpp"

namespace gfolds {

GraphBatch make_batch(std::span<const GraphDoc> graphs, std::size_t width) {
  if (graphs.empty()) {
    throw EmptyBatchError("make_batch: no graphs");
  }
  std::size_t widest = 0;
  for (const auto& g : graphs) {
    widest = std::max(widest, g.nodes.size());
  }
  if (width == 0) {
    width = widest;
  } else if (widest > width) {
    throw DimensionError("make_batch: graph of " + std::to_string(widest) +
                         " nodes exceeds width " + std::to_string(width));
  }
  GraphBatch b;
  b.batch_size = graphs.size();
  b.width = width;
  b.labels.assign(b.rows(), 0);
  b.valid.assign(b.rows(), 0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = graphs[gi];
    if (g.nodes.empty()) {
      throw SchemaError("make_batch: graph '" + g.id + "' has no nodes");
    }
    b.node_counts.push_back(g.nodes.size());
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      const std::size_t r = b.row(gi, j);
      b.labels[r] = g.nodes[j].label;
      b.valid[r] = 1;
      // Sorted ids give a fixed summation order for any input order.
      auto feats = g.nodes[j].features;
      std::sort(feats.begin(), feats.end());
      for (FeatureId f : feats) {
        b.feature_rows.push_back(r);
        b.feature_ids.push_back(f);
      }
    }
    for (const auto& e : g.edges) {
      if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) {
        throw SchemaError("make_batch: graph '" + g.id + "' has an edge outside its nodes");
      }
      b.edge_src.push_back(b.row(gi, e.src));
      b.edge_dst.push_back(b.row(gi, e.dst));
      b.edge_labels.push_back(e.label);
    }
  }
  return b;
}

std::vector<std::pair<std::string, Shape>> model_param_shapes(const ModelConfig& c,
                                                              std::size_t num_classes) {
  const std::size_t d = c.d_model;
  const std::size_t s = c.d_swa;
  std::vector<std::pair<std::string, Shape>> out;
  auto norm = [&](const std::string& prefix, std::size_t width) {
    out.emplace_back(prefix + ".gain", Shape{width});
    out.emplace_back(prefix + ".bias", Shape{width});
  };
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t o) {
    out.emplace_back(prefix + ".weight", Shape{in, o});
    out.emplace_back(prefix + ".bias", Shape{o});
  };
  out.emplace_back("embed.token", Shape{c.vocab_size, d});
  out.emplace_back("embed.feature", Shape{c.n_features, d});
  norm("embed.feature_norm", d);
  dense("pe.in", d, s);
  for (std::size_t l = 0; l < c.n_swa_layers; ++l) {
    const std::string pre = "pe.swa" + std::to_string(l);
    for (const auto& label : c.edge_labels) {
      out.emplace_back(pre + ".fwd." + label, Shape{s, s});
      out.emplace_back(pre + ".bwd." + label, Shape{s, s});
    }
    norm(pre + ".fwd_norm", s);
    norm(pre + ".bwd_norm", s);
    dense(pre + ".ff.in", s, c.ff_inner_swa);
    dense(pre + ".ff.out", c.ff_inner_swa, s);
  }
  dense("pe.out", s, d);
  for (std::size_t l = 0; l < c.n_encoder_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l);
    norm(pre + ".ln1", d);
    dense(pre + ".attn.q", d, d);
    dense(pre + ".attn.k", d, d);
    dense(pre + ".attn.v", d, d);
    dense(pre + ".attn.o", d, d);
    norm(pre + ".ln2", d);
    dense(pre + ".ff.in", d, c.ff_inner_encoder);
    dense(pre + ".ff.out", c.ff_inner_encoder, d);
  }
  dense("mnm.dense", d, d);
  norm("mnm.norm", d);
  dense("mnm.out", d, c.vocab_size);
  if (num_classes > 0) {
    dense("cls.hidden", d, d);
    dense("cls.out", d, num_classes);
  }
  return out;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <class T>
std::vector<T> init_values(const std::string& name, const Shape& shape, const Rng& root) {
  std::vector<T> v(shape_numel(shape));
  if (ends_with(name, ".gain")) {
    std::fill(v.begin(), v.end(), T{1});
  } else if (ends_with(name, ".bias")) {
    std::fill(v.begin(), v.end(), T{0});
  } else {
    Rng rng = root.split(name);
    for (auto& x : v) {
      x = static_cast<T>(rng.truncated_normal(0.02));
    }
  }
  return v;
}

}  // namespace

template <class T>
GfoldsModel<T>::GfoldsModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const Rng root = Rng(seed).split("init");
  for (const auto& [name, shape] : model_param_shapes(config_)) {
    params_.add(name, shape, init_values<T>(name, shape, root));
  }
}

template <class T>
GfoldsModel<T>::GfoldsModel(ModelConfig config, ParamStore<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  if (params_.contains("cls.out.weight")) {
    const auto& w = params_.get("cls.out.weight");
    num_classes_ = w.rank() == 2 ? w.dim(1) : 0;
    if (num_classes_ == 0) {
      throw ConfigError("model: classifier output has an invalid shape");
    }
  }
  const auto expected = model_param_shapes(config_, num_classes_);
  for (const auto& [name, shape] : expected) {
    if (!params_.contains(name)) {
      throw ConfigError("model: parameter '" + name + "' missing for this configuration");
    }
    if (params_.get(name).shape() != shape) {
      throw ConfigError("model: parameter '" + name + "' has shape " +
                        shape_to_string(params_.get(name).shape()) + ", configuration expects " +
                        shape_to_string(shape));
    }
  }
  if (params_.size() != expected.size()) {
    std::set<std::string> known;
    for (const auto& e : expected) {
      known.insert(e.first);
    }
    for (const auto& name : params_.names()) {
      if (!known.contains(name)) {
        throw ConfigError("model: unexpected parameter '" + name + "'");
      }
    }
  }
}

template <class T>
void GfoldsModel<T>::add_classifier(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) {
    throw ConfigError("model: a classifier needs at least two classes");
  }
  if (has_classifier()) {
    throw ConfigError("model: classifier head already present");
  }
  const Rng root = Rng(seed).split("classifier");
  const auto all = model_param_shapes(config_, num_classes);
  for (const auto& [name, shape] : all) {
    if (is_classifier_param(name)) {
      params_.add(name, shape, init_values<T>(name, shape, root));
    }
  }
  num_classes_ = num_classes;
}

template <class T>
bool GfoldsModel<T>::is_mnm_param(const std::string& name) {
  return name.rfind("mnm.", 0) == 0;
}

template <class T>
bool GfoldsModel<T>::is_classifier_param(const std::string& name) {
  return name.rfind("cls.", 0) == 0;
}

template <class T>
BasicTensor<T> GfoldsModel<T>::embed_nodes(const GraphBatch& batch) const {
  const auto tokens = ops::embedding(p("embed.token"), std::span<const std::int32_t>(batch.labels));
  if (batch.feature_ids.empty()) {
    return tokens;
  }
  const auto feats = ops::embedding(p("embed.feature"), std::span<const std::int32_t>(batch.feature_ids));
  const auto summed = ops::scatter_add_rows(feats, batch.feature_rows, batch.rows());
  const auto normed = ops::layer_norm(summed, p("embed.feature_norm.gain"),
                                      p("embed.feature_norm.bias"), config_.layer_norm_eps);
  // Rows without features take no Norm contribution.
  std::vector<T> has(batch.rows(), T{0});
  for (std::size_t r : batch.feature_rows) {
    has[r] = T{1};
  }
  return ops::add(tokens, ops::scale_rows(normed, std::span<const T>(has)));
}

template <class T>
BasicTensor<T> GfoldsModel<T>::feed_forward(const std::string& prefix, const TensorT& x) const {
  const auto inner = ops::gelu(ops::linear(x, p(prefix + ".in.weight"), p(prefix + ".in.bias")));
  return ops::linear(inner, p(prefix + ".out.weight"), p(prefix + ".out.bias"));
}

template <class T>
BasicTensor<T> GfoldsModel<T>::swa_layer(std::size_t layer, const TensorT& h,
                                         const GraphBatch& batch) const {
  const std::size_t rows = batch.rows();
  const std::size_t s = config_.d_swa;
  if (layer >= config_.n_swa_layers) {
    throw ConfigError("swa_layer: layer " + std::to_string(layer) + " of " +
                      std::to_string(config_.n_swa_layers));
  }
  if (h.rank() != 2 || h.dim(0) != rows || h.dim(1) != s) {
    throw DimensionError("swa_layer: expected [" + std::to_string(rows) + ", " +
                         std::to_string(s) + "], got " + shape_to_string(h.shape()));
  }
  const std::size_t n_labels = config_.edge_labels.size();
  std::vector<std::vector<std::int32_t>> src(n_labels);
  std::vector<std::vector<std::int32_t>> dst(n_labels);
  std::vector<std::vector<std::size_t>> src_rows(n_labels);
  std::vector<std::vector<std::size_t>> dst_rows(n_labels);
  std::vector<T> has_in(rows, T{0});
  std::vector<T> has_out(rows, T{0});
  for (std::size_t e = 0; e < batch.edge_labels.size(); ++e) {
    const EdgeLabelId label = batch.edge_labels[e];
    if (label < 0 || static_cast<std::size_t>(label) >= n_labels) {
      throw ConfigError("swa_layer: edge label id " + std::to_string(label) +
                        " has no projection (configured labels: " + std::to_string(n_labels) + ")");
    }
    const auto l = static_cast<std::size_t>(label);
    src[l].push_back(static_cast<std::int32_t>(batch.edge_src[e]));
    dst[l].push_back(static_cast<std::int32_t>(batch.edge_dst[e]));
    src_rows[l].push_back(batch.edge_src[e]);
    dst_rows[l].push_back(batch.edge_dst[e]);
    has_in[batch.edge_dst[e]] = T{1};
    has_out[batch.edge_src[e]] = T{1};
  }

  const std::string pre = "pe.swa" + std::to_string(layer);
  TensorT fwd;
  TensorT bwd;
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (src[l].empty()) {
      continue;
    }
    const auto& label = config_.edge_labels[l];
    const auto f = ops::scatter_add_rows(
        ops::matmul(ops::embedding(h, std::span<const std::int32_t>(src[l])), p(pre + ".fwd." + label)),
        dst_rows[l], rows);
    const auto b = ops::scatter_add_rows(
        ops::matmul(ops::embedding(h, std::span<const std::int32_t>(dst[l])), p(pre + ".bwd." + label)),
        src_rows[l], rows);
    fwd = fwd.defined() ? ops::add(fwd, f) : f;
    bwd = bwd.defined() ? ops::add(bwd, b) : b;
  }
  TensorT combined;
  if (!fwd.defined()) {
    combined = TensorT::zeros({rows, s});
  } else {
    const auto fn = ops::scale_rows(
        ops::layer_norm(fwd, p(pre + ".fwd_norm.gain"), p(pre + ".fwd_norm.bias"),
                        config_.layer_norm_eps),
        std::span<const T>(has_in));
    const auto bn = ops::scale_rows(
        ops::layer_norm(bwd, p(pre + ".bwd_norm.gain"), p(pre + ".bwd_norm.bias"),
                        config_.layer_norm_eps),
        std::span<const T>(has_out));
    combined = ops::add(fn, bn);
  }
  return feed_forward(pre + ".ff", combined);
}

template <class T>
BasicTensor<T> GfoldsModel<T>::positional_encoding(const TensorT& e, const GraphBatch& batch) const {
  auto x = ops::linear(e, p("pe.in.weight"), p("pe.in.bias"));
  for (std::size_t l = 0; l < config_.n_swa_layers; ++l) {
    x = swa_layer(l, x, batch);
  }
  return ops::linear(x, p("pe.out.weight"), p("pe.out.bias"));
}

template <class T>
BasicTensor<T> GfoldsModel<T>::attention(std::size_t layer, const TensorT& h,
                                         std::span<const T> key_bias, std::size_t batch_size,
                                         std::size_t width) const {
  const std::size_t d = config_.d_model;
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = d / heads;
  const std::string pre = "enc" + std::to_string(layer) + ".attn";
  const Shape split{batch_size, width, d};
  const auto q = ops::reshape(ops::linear(h, p(pre + ".q.weight"), p(pre + ".q.bias")), split);
  const auto k = ops::reshape(ops::linear(h, p(pre + ".k.weight"), p(pre + ".k.bias")), split);
  const auto v = ops::reshape(ops::linear(h, p(pre + ".v.weight"), p(pre + ".v.bias")), split);
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<TensorT> outs;
  outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const auto qh = ops::slice_last(q, i * dh, dh);
    const auto kh = ops::slice_last(k, i * dh, dh);
    const auto vh = ops::slice_last(v, i * dh, dh);
    const auto scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    outs.push_back(ops::matmul(ops::softmax_last(scores, key_bias), vh));
  }
  const auto ctx = ops::reshape(heads == 1 ? outs.front() : ops::concat_last(outs),
                                Shape{batch_size * width, d});
  return ops::linear(ctx, p(pre + ".o.weight"), p(pre + ".o.bias"));
}

template <class T>
BasicTensor<T> GfoldsModel<T>::encoder_forward(const TensorT& x, std::span<const std::uint8_t> valid,
                                               std::size_t batch_size, std::size_t width,
                                               const ForwardOptions& options) const {
  const std::size_t rows = batch_size * width;
  if (valid.size() != rows) {
    throw DimensionError("encoder_forward: pad mask of " + std::to_string(valid.size()) +
                         " entries for " + std::to_string(batch_size) + " x " +
                         std::to_string(width) + " rows");
  }
  if (x.rank() != 2 || x.dim(0) != rows || x.dim(1) != config_.d_model) {
    throw DimensionError("encoder_forward: input " + shape_to_string(x.shape()) + " does not match [" +
                         std::to_string(rows) + ", " + std::to_string(config_.d_model) + "]");
  }
  std::vector<T> key_bias(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    if (valid[r] == 0) {
      key_bias[r] = -std::numeric_limits<T>::infinity();
    }
  }
  const bool drop = options.train && config_.dropout > 0.0;
  if (drop && options.rng == nullptr) {
    throw ConfigError("encoder_forward: dropout in training mode needs an rng");
  }
  auto h = x;
  for (std::size_t l = 0; l < config_.n_encoder_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l);
    auto a = attention(l, ops::layer_norm(h, p(pre + ".ln1.gain"), p(pre + ".ln1.bias"),
                                          config_.layer_norm_eps),
                       std::span<const T>(key_bias), batch_size, width);
    if (drop) {
      a = ops::dropout(a, config_.dropout, *options.rng);
    }
    const auto h1 = ops::add(h, a);
    auto f = feed_forward(pre + ".ff", ops::layer_norm(h1, p(pre + ".ln2.gain"), p(pre + ".ln2.bias"),
                                                       config_.layer_norm_eps));
    if (drop) {
      f = ops::dropout(f, config_.dropout, *options.rng);
    }
    h = ops::add(h1, f);
  }
  return h;
}

template <class T>
BasicTensor<T> GfoldsModel<T>::encoder_forward(const TensorT& x, const GraphBatch& batch,
                                               const ForwardOptions& options) const {
  return encoder_forward(x, batch.valid, batch.batch_size, batch.width, options);
}

template <class T>
BasicTensor<T> GfoldsModel<T>::encode(const GraphBatch& batch, const ForwardOptions& options) const {
  const auto e = embed_nodes(batch);
  if (options.zero_positional) {
    return encoder_forward(e, batch, options);
  }
  return encoder_forward(ops::add(e, positional_encoding(e, batch)), batch, options);
}

template <class T>
BasicTensor<T> GfoldsModel<T>::mnm_logits(const TensorT& h) const {
  const auto hidden = ops::gelu(ops::linear(h, p("mnm.dense.weight"), p("mnm.dense.bias")));
  const auto normed =
      ops::layer_norm(hidden, p("mnm.norm.gain"), p("mnm.norm.bias"), config_.layer_norm_eps);
  return ops::linear(normed, p("mnm.out.weight"), p("mnm.out.bias"));
}

template <class T>
BasicTensor<T> GfoldsModel<T>::mean_pool(const TensorT& h, const GraphBatch& batch) const {
  if (h.rank() != 2 || h.dim(0) != batch.rows()) {
    throw DimensionError("mean_pool: node matrix " + shape_to_string(h.shape()) + " for " +
                         std::to_string(batch.rows()) + " rows");
  }
  std::vector<T> weight(batch.rows(), T{0});
  std::vector<std::size_t> graph_of(batch.rows());
  for (std::size_t g = 0; g < batch.batch_size; ++g) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < batch.width; ++j) {
      count += batch.valid[batch.row(g, j)];
    }
    if (count == 0) {
      throw EmptyBatchError("mean_pool: graph " + std::to_string(g) + " has no non-pad node");
    }
    for (std::size_t j = 0; j < batch.width; ++j) {
      const std::size_t r = batch.row(g, j);
      graph_of[r] = g;
      weight[r] = batch.valid[r] != 0 ? static_cast<T>(1.0 / static_cast<double>(count)) : T{0};
    }
  }
  return ops::scatter_add_rows(ops::scale_rows(h, std::span<const T>(weight)), graph_of,
                               batch.batch_size);
}

template <class T>
BasicTensor<T> GfoldsModel<T>::classify(const TensorT& h, const GraphBatch& batch) const {
  if (!has_classifier()) {
    throw ConfigError("classify: model has no classifier head");
  }
  const auto pooled = mean_pool(h, batch);
  const auto hidden = ops::gelu(ops::linear(pooled, p("cls.hidden.weight"), p("cls.hidden.bias")));
  return ops::linear(hidden, p("cls.out.weight"), p("cls.out.bias"));
}

template class GfoldsModel<float>;
template class GfoldsModel<double>;

}  // namespace gfolds
