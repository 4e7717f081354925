// SPDX-License-Identifier: Apache-2.0
#include "gfolds/model_config.hpp"

#include <cmath>
#include <set>

#include "gfolds/errors.hpp"
#include "gfolds/graph.hpp"

namespace gfolds {

std::vector<std::string> ModelConfig::default_edge_labels() {
  return std::vector<std::string>(kEdgeLabels.begin(), kEdgeLabels.end());
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_model = 1024;
  c.d_swa = 1024;
  c.n_swa_layers = 2;
  c.n_encoder_layers = 10;
  c.n_heads = 8;
  c.ff_inner_encoder = 4096;
  c.ff_inner_swa = 4096;
  c.vocab_size = 22077;
  c.n_features = 32;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) {
      throw ConfigError(std::string("model config: ") + name + " must be positive");
    }
  };
  positive(d_model, "d_model");
  positive(d_swa, "d_swa");
  positive(n_heads, "n_heads");
  positive(ff_inner_encoder, "ff_inner_encoder");
  positive(ff_inner_swa, "ff_inner_swa");
  positive(vocab_size, "vocab_size");
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(layer_norm_eps > 0.0) || !std::isfinite(layer_norm_eps)) {
    throw ConfigError("model config: layer_norm_eps must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("model config: dropout must lie in [0, 1)");
  }
  std::set<std::string> seen;
  for (const auto& l : edge_labels) {
    if (l.empty() || l.find_first_of(", \t") != std::string::npos) {
      throw ConfigError("model config: edge label '" + l + "' is empty or contains a separator");
    }
    if (!seen.insert(l).second) {
      throw ConfigError("model config: duplicate edge label '" + l + "'");
    }
  }
}

const std::vector<std::string_view>& ModelConfig::kv_keys() {
  static const std::vector<std::string_view> keys = {
      "d_model",    "d_swa",      "n_swa_layers", "n_encoder_layers", "n_heads",
      "ff_inner_encoder", "ff_inner_swa", "vocab_size", "n_features", "edge_labels",
      "layer_norm_eps", "dropout"};
  return keys;
}

KeyValueConfig ModelConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("d_model", std::to_string(d_model));
  kv.set("d_swa", std::to_string(d_swa));
  kv.set("n_swa_layers", std::to_string(n_swa_layers));
  kv.set("n_encoder_layers", std::to_string(n_encoder_layers));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("ff_inner_encoder", std::to_string(ff_inner_encoder));
  kv.set("ff_inner_swa", std::to_string(ff_inner_swa));
  kv.set("vocab_size", std::to_string(vocab_size));
  kv.set("n_features", std::to_string(n_features));
  std::string labels;
  for (const auto& l : edge_labels) {
    labels += (labels.empty() ? "" : ",") + l;
  }
  kv.set("edge_labels", labels);
  kv.set("layer_norm_eps", format_double(layer_norm_eps));
  kv.set("dropout", format_double(dropout));
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv) {
  ModelConfig c;
  c.d_model = kv.get_size("d_model", c.d_model);
  c.d_swa = kv.get_size("d_swa", c.d_swa);
  c.n_swa_layers = kv.get_size("n_swa_layers", c.n_swa_layers);
  c.n_encoder_layers = kv.get_size("n_encoder_layers", c.n_encoder_layers);
  c.n_heads = kv.get_size("n_heads", c.n_heads);
  c.ff_inner_encoder = kv.get_size("ff_inner_encoder", 4 * c.d_model);
  c.ff_inner_swa = kv.get_size("ff_inner_swa", 4 * c.d_swa);
  c.vocab_size = kv.get_size("vocab_size", c.vocab_size);
  c.n_features = kv.get_size("n_features", c.n_features);
  if (kv.has("edge_labels")) {
    c.edge_labels = kv.get_list("edge_labels");
  }
  c.layer_norm_eps = kv.get_double("layer_norm_eps", c.layer_norm_eps);
  c.dropout = kv.get_double("dropout", c.dropout);
  c.validate();
  return c;
}

ParamCount count_parameters(const ModelConfig& c, std::size_t num_classes) {
  const std::size_t d = c.d_model;
  const std::size_t s = c.d_swa;
  const std::size_t labels = c.edge_labels.size();
  ParamCount out;
  auto group = [&](std::string name, std::size_t n) {
    out.groups.push_back({std::move(name), n});
    out.total += n;
  };
  group("embeddings", c.vocab_size * d + c.n_features * d + 2 * d);
  group("positional.projections", (d * s + s) + (s * d + d));
  group("positional.edge_projections", 2 * c.n_swa_layers * labels * s * s);
  group("positional.norms", c.n_swa_layers * 4 * s);
  group("positional.feed_forward",
        c.n_swa_layers * (s * c.ff_inner_swa + c.ff_inner_swa + c.ff_inner_swa * s + s));
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t norms = 4 * d;
  const std::size_t ff = d * c.ff_inner_encoder + c.ff_inner_encoder + c.ff_inner_encoder * d + d;
  group("encoder", c.n_encoder_layers * (attention + norms + ff));
  group("mnm_head", (d * d + d) + 2 * d + (d * c.vocab_size + c.vocab_size));
  if (num_classes > 0) {
    group("classifier", (d * d + d) + (d * num_classes + num_classes));
  }
  out.per_edge_label = 2 * c.n_swa_layers * s * s;
  return out;
}

}  // namespace gfolds
