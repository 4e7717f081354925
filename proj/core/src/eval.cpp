// SPDX-License-Identifier: Apache-2.0
#include "gfolds/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "gfolds/errors.hpp"
#include "gfolds/log.hpp"
#include "gfolds/ops.hpp"
#include "gfolds/optim.hpp"
#include "gfolds/preprocess.hpp"
#include "internal/json_graph.hpp"

namespace gfolds {

namespace {

using nlohmann::json;

const json& need(const json& obj, const char* key) {
  if (!obj.is_object()) {
    throw SchemaError("record must be a JSON object");
  }
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(std::string("missing field \"") + key + "\"");
  }
  return *it;
}

std::size_t need_index(const json& obj, const char* key) {
  const auto& v = need(obj, key);
  if (!v.is_number_unsigned()) {
    throw SchemaError(std::string("\"") + key + "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string need_string(const json& obj, const char* key) {
  const auto& v = need(obj, key);
  if (!v.is_string()) {
    throw SchemaError(std::string("\"") + key + "\" must be a string");
  }
  return v.get<std::string>();
}

TokenId need_token(const Vocabulary& vocab, const std::string& label) {
  const auto id = vocab.token_id(label);
  if (!id || Vocabulary::is_reserved(*id)) {
    throw SchemaError("'" + label + "' is not a predicate in the vocabulary");
  }
  return *id;
}

RankingInstance instance_from(const json& graph_value, std::size_t query, const Vocabulary& vocab) {
  const RawGraph raw = detail::raw_graph_from_value(graph_value);
  const auto index = preprocessed_index(raw, query);
  if (!index) {
    throw SchemaError("graph '" + raw.id + "': query node " + std::to_string(query) +
                      " is out of range or removed by preprocessing");
  }
  RankingInstance inst;
  inst.graph = preprocess(raw, vocab);
  inst.query_node = *index;
  if (inst.graph.nodes[*index].label != Vocabulary::kMask) {
    throw SchemaError("graph '" + raw.id + "': query node " + std::to_string(query) +
                      " is not [MASK]");
  }
  return inst;
}

std::vector<TokenId> candidate_set(const RankingInstance& inst, std::size_t vocab_size) {
  std::vector<TokenId> c = inst.candidates;
  if (c.empty()) {
    for (auto t = Vocabulary::kNumReserved; t < static_cast<TokenId>(vocab_size); ++t) {
      c.push_back(t);
    }
    return c;
  }
  for (TokenId t : c) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw IndexError("masked_rank: candidate token " + std::to_string(t) +
                       " outside the vocabulary of " + std::to_string(vocab_size));
    }
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

}  // namespace

std::vector<RankedToken> masked_rank(const GfoldsModel<float>& model, const RankingInstance& inst,
                                     const RankOptions& options) {
  if (inst.query_node >= inst.graph.nodes.size()) {
    throw SchemaError("masked_rank: query node " + std::to_string(inst.query_node) +
                      " outside a graph of " + std::to_string(inst.graph.nodes.size()) + " nodes");
  }
  if (inst.graph.nodes[inst.query_node].label != Vocabulary::kMask) {
    throw SchemaError("masked_rank: query node " + std::to_string(inst.query_node) +
                      " does not carry [MASK]");
  }
  const std::size_t vocab_size = model.config().vocab_size;
  const auto candidates = candidate_set(inst, vocab_size);

  NoGradGuard guard;
  const auto batch = make_batch(std::span(&inst.graph, 1));
  const auto h = model.encode(batch);
  const std::int32_t row = static_cast<std::int32_t>(inst.query_node);
  const auto logits = model.mnm_logits(ops::embedding(h, std::span<const std::int32_t>(&row, 1)));
  const auto values = logits.data();

  std::vector<RankedToken> out;
  out.reserve(candidates.size());
  if (options.renormalize) {
    double top = -std::numeric_limits<double>::infinity();
    for (TokenId t : candidates) {
      top = std::max(top, static_cast<double>(values[t]));
    }
    double total = 0.0;
    for (TokenId t : candidates) {
      const double e = std::exp(static_cast<double>(values[t]) - top);
      out.push_back({t, e});
      total += e;
    }
    for (auto& r : out) {
      r.score /= total;
    }
  } else {
    for (TokenId t : candidates) {
      out.push_back({t, static_cast<double>(values[t])});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedToken& a, const RankedToken& b) {
    return a.score > b.score || (a.score == b.score && a.token < b.token);
  });
  return out;
}

double average_precision(std::span<const std::uint8_t> relevant) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < relevant.size(); ++i) {
    if (relevant[i] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) {
    throw DomainError("average_precision: no relevant item");
  }
  return sum / static_cast<double>(hits);
}

double mean_of(std::span<const double> values) {
  if (values.empty()) {
    throw DomainError("mean: no values");
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void RetrievalDataset::validate() const {
  std::unordered_map<TokenId, std::size_t> count;
  for (TokenId t : terms) {
    if (!count.emplace(t, 0).second) {
      throw SchemaError("retrieval dataset: duplicate term " + std::to_string(t));
    }
  }
  for (const auto& p : properties) {
    const auto it = count.find(p.term);
    if (it == count.end()) {
      throw SchemaError("retrieval dataset: property term " + std::to_string(p.term) +
                        " is not a listed term");
    }
    ++it->second;
  }
  for (TokenId t : terms) {
    if (count[t] == 0) {
      throw SchemaError("retrieval dataset: term " + std::to_string(t) + " has no property");
    }
  }
}

MapResult map_from_scores(const std::vector<std::vector<double>>& scores,
                          std::span<const std::size_t> gold, std::size_t num_terms) {
  if (scores.size() != gold.size()) {
    throw DimensionError("map: " + std::to_string(scores.size()) + " score rows for " +
                         std::to_string(gold.size()) + " properties");
  }
  MapResult out;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t t = 0; t < num_terms; ++t) {
    std::iota(order.begin(), order.end(), 0);
    for (const auto& row : scores) {
      if (row.size() != num_terms) {
        throw DimensionError("map: score row width differs from the term count");
      }
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a][t] > scores[b][t];
    });
    std::vector<std::uint8_t> relevant(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      relevant[r] = gold[order[r]] == t;
    }
    try {
      out.per_term.push_back(average_precision(relevant));
    } catch (const DomainError&) {
      throw DomainError("map: term " + std::to_string(t) + " has no relevant property");
    }
  }
  out.map = mean_of(out.per_term);
  return out;
}

MapResult map_score(const GfoldsModel<float>& model, const RetrievalDataset& dataset,
                    const RankOptions& options) {
  dataset.validate();
  std::unordered_map<TokenId, std::size_t> term_index;
  for (std::size_t i = 0; i < dataset.terms.size(); ++i) {
    term_index[dataset.terms[i]] = i;
  }
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> gold;
  for (const auto& p : dataset.properties) {
    RankingInstance inst = p.instance;
    inst.candidates = dataset.terms;
    std::vector<double> row(dataset.terms.size());
    for (const auto& r : masked_rank(model, inst, options)) {
      row[term_index.at(r.token)] = r.score;
    }
    scores.push_back(std::move(row));
    gold.push_back(term_index.at(p.term));
  }
  return map_from_scores(scores, gold, dataset.terms.size());
}

RetrievalDataset read_retrieval_jsonl(const std::filesystem::path& path, const Vocabulary& vocab) {
  RetrievalDataset out;
  std::unordered_map<TokenId, bool> seen;
  detail::for_each_json_line(path, [&](const json& v) {
    RetrievalProperty p;
    p.term = need_token(vocab, need_string(v, "term"));
    if (const auto it = v.find("hypernym"); it != v.end() && it->is_string()) {
      p.hypernym = it->get<std::string>();
    }
    p.instance = instance_from(need(v, "property_graph"), need_index(v, "query_node"), vocab);
    p.instance.gold = p.term;
    if (seen.emplace(p.term, true).second) {
      out.terms.push_back(p.term);
    }
    out.properties.push_back(std::move(p));
  });
  out.validate();
  return out;
}

double precision_at_k(std::span<const RankedToken> ranked, const TokenClass& in_class,
                      std::size_t k) {
  if (k == 0 || k > ranked.size()) {
    throw ConfigError("precision_at_k: k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(ranked.size()) + "]");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) {
    hits += in_class(ranked[i].token) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

double precision_at_k(const GfoldsModel<float>& model, const RankingInstance& inst,
                      const TokenClass& in_class, std::size_t k) {
  const auto ranked = masked_rank(model, inst);
  return precision_at_k(ranked, in_class, k);
}

TokenClass pos_class(const Vocabulary& vocab, Pos pos) {
  std::vector<bool> member(vocab.size(), false);
  for (TokenId t = Vocabulary::kNumReserved; t < static_cast<TokenId>(vocab.size()); ++t) {
    member[t] = pos_of(vocab.token(t)) == pos;
  }
  return [member = std::move(member)](TokenId t) {
    return t >= 0 && static_cast<std::size_t>(t) < member.size() && member[t];
  };
}

TokenClass quantifier_class(const Vocabulary& vocab, QuantNumber target) {
  std::vector<bool> member(vocab.size(), false);
  for (TokenId t = Vocabulary::kNumReserved; t < static_cast<TokenId>(vocab.size()); ++t) {
    member[t] = quantifier_agrees(vocab.token(t), target);
  }
  return [member = std::move(member)](TokenId t) {
    return t >= 0 && static_cast<std::size_t>(t) < member.size() && member[t];
  };
}

TokenClass class_by_name(const Vocabulary& vocab, const std::string& name) {
  if (name == "singular") {
    return quantifier_class(vocab, QuantNumber::kSingular);
  }
  if (name == "plural") {
    return quantifier_class(vocab, QuantNumber::kPlural);
  }
  if (const auto pos = parse_pos(name)) {
    return pos_class(vocab, *pos);
  }
  throw ConfigError("unknown token class '" + name + "'");
}

std::vector<ClassInstance> read_class_jsonl(const std::filesystem::path& path,
                                            const Vocabulary& vocab) {
  std::vector<ClassInstance> out;
  detail::for_each_json_line(path, [&](const json& v) {
    ClassInstance c;
    c.instance = instance_from(need(v, "graph"), need_index(v, "query_node"), vocab);
    c.class_name = need_string(v, "class");
    class_by_name(vocab, c.class_name);
    if (v.contains("gold")) {
      c.instance.gold = need_token(vocab, need_string(v, "gold"));
    }
    out.push_back(std::move(c));
  });
  return out;
}

int binarize_veridicality(std::span<const std::string> labels) {
  if (labels.empty()) {
    throw SchemaError("veridicality: empty annotation set");
  }
  long sum = 0;
  for (const auto& l : labels) {
    if (l == "yes") {
      sum += 1;
    } else if (l == "no") {
      sum -= 1;
    } else if (l != "maybe") {
      throw SchemaError("veridicality: unknown annotation '" + l + "'");
    }
  }
  // The mean is positive exactly when the integer sum is.
  return sum > 0 ? 1 : 0;
}

std::vector<LabeledGraph> read_labeled_jsonl(const std::filesystem::path& path,
                                             const Vocabulary& vocab) {
  std::vector<LabeledGraph> out;
  detail::for_each_json_line(path, [&](const json& v) {
    LabeledGraph item;
    if (v.is_object() && v.contains("premise")) {
      const auto p = preprocess(detail::raw_graph_from_value(need(v, "premise")), vocab);
      const auto h = preprocess(detail::raw_graph_from_value(need(v, "hypothesis")), vocab);
      item.graph = merge_premise_hypothesis(p, h);
    } else {
      item.graph = preprocess(detail::raw_graph_from_value(need(v, "graph")), vocab);
    }
    if (v.contains("label")) {
      const auto& l = v.at("label");
      if (!l.is_number_integer()) {
        throw SchemaError("\"label\" must be an integer");
      }
      item.label = l.get<int>();
    } else {
      const auto& arr = need(v, "labels");
      if (!arr.is_array()) {
        throw SchemaError("\"labels\" must be an array of strings");
      }
      std::vector<std::string> labels;
      for (const auto& a : arr) {
        if (!a.is_string()) {
          throw SchemaError("\"labels\" must be an array of strings");
        }
        labels.push_back(a.get<std::string>());
      }
      item.label = binarize_veridicality(labels);
    }
    out.push_back(std::move(item));
  });
  return out;
}

void FinetuneConfig::validate() const {
  if (epochs == 0 || batch_size == 0) {
    throw ConfigError("finetune config: epochs and batch_size must be positive");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("finetune config: lr must be positive");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("finetune config: weight_decay must be non-negative");
  }
  if (num_classes < 2) {
    throw ConfigError("finetune config: num_classes must be at least 2");
  }
}

const std::vector<std::string_view>& FinetuneConfig::kv_keys() {
  static const std::vector<std::string_view> keys = {
      "epochs", "lr", "weight_decay", "batch_size", "num_classes", "seed", "freeze_encoder"};
  return keys;
}

KeyValueConfig FinetuneConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("epochs", std::to_string(epochs));
  kv.set("lr", format_double(lr));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("num_classes", std::to_string(num_classes));
  kv.set("seed", std::to_string(seed));
  kv.set("freeze_encoder", freeze_encoder ? "true" : "false");
  return kv;
}

FinetuneConfig FinetuneConfig::from_kv(const KeyValueConfig& kv) {
  FinetuneConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.lr = kv.get_double("lr", c.lr);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.num_classes = kv.get_size("num_classes", c.num_classes);
  c.seed = static_cast<std::uint64_t>(kv.get_size("seed", c.seed));
  c.freeze_encoder = kv.get_bool("freeze_encoder", c.freeze_encoder);
  c.validate();
  return c;
}

namespace {

struct ClassBatch {
  GraphBatch batch;
  std::vector<std::int32_t> labels;
};

ClassBatch class_batch(std::span<const LabeledGraph> data, std::span<const std::size_t> idx) {
  std::vector<GraphDoc> graphs;
  ClassBatch out;
  for (std::size_t i : idx) {
    graphs.push_back(data[i].graph);
    out.labels.push_back(data[i].label);
  }
  out.batch = make_batch(graphs);
  return out;
}

}  // namespace

std::vector<int> predict_classes(const GfoldsModel<float>& model,
                                 std::span<const LabeledGraph> data, std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<int> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto b = class_batch(data, idx);
    const auto logits = model.classify(model.encode(b.batch), b.batch);
    const std::size_t c = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = logits.data().subspan(r * c, c);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

double classification_accuracy(const GfoldsModel<float>& model, std::span<const LabeledGraph> data,
                               std::size_t batch_size) {
  if (data.empty()) {
    return 0.0;
  }
  const auto pred = predict_classes(model, data, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += pred[i] == data[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

FinetuneReport finetune_classifier(GfoldsModel<float>& model, std::span<const LabeledGraph> train,
                                   std::span<const LabeledGraph> test,
                                   const FinetuneConfig& config) {
  config.validate();
  if (train.empty()) {
    throw EmptyBatchError("finetune: empty training set");
  }
  FinetuneReport report;
  report.class_counts.assign(config.num_classes, 0);
  for (const auto* set : {&train, &test}) {
    for (const auto& item : *set) {
      if (item.label < 0 || static_cast<std::size_t>(item.label) >= config.num_classes) {
        throw SchemaError("finetune: label " + std::to_string(item.label) + " outside [0, " +
                          std::to_string(config.num_classes) + ")");
      }
    }
  }
  for (const auto& item : train) {
    ++report.class_counts[item.label];
  }
  const auto present = std::count_if(report.class_counts.begin(), report.class_counts.end(),
                                     [](std::size_t n) { return n > 0; });
  if (present < 2) {
    report.degenerate = true;
    log_warn("finetune: training labels cover a single class; the classifier is degenerate");
  }
  if (!model.has_classifier()) {
    model.add_classifier(config.num_classes, config.seed);
  } else if (model.num_classes() != config.num_classes) {
    throw ConfigError("finetune: model head has " + std::to_string(model.num_classes()) +
                      " classes, config asks for " + std::to_string(config.num_classes));
  }

  auto& params = model.params();
  std::vector<bool> was_trainable;
  for (const auto& name : params.names()) {
    was_trainable.push_back(params.trainable(name));
    const bool head = GfoldsModel<float>::is_classifier_param(name);
    const bool mnm = GfoldsModel<float>::is_mnm_param(name);
    params.set_trainable(name, head || (!mnm && !config.freeze_encoder));
  }

  AdamWConfig opt_cfg;
  opt_cfg.weight_decay = config.weight_decay;
  AdamW<float> optimizer(opt_cfg);
  const Rng root = Rng(config.seed).split("finetune");
  std::vector<std::size_t> order(train.size());
  try {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle = root.split("shuffle").split(epoch);
      shuffle.shuffle(std::span(order));
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - start);
        const auto b = class_batch(train, std::span(order).subspan(start, n));
        Rng drop = root.split("dropout").split(epoch * order.size() + start);
        ForwardOptions opts;
        opts.train = true;
        opts.rng = &drop;
        params.zero_grad();
        const auto logits = model.classify(model.encode(b.batch, opts), b.batch);
        const auto loss = ops::cross_entropy(logits, std::span<const std::int32_t>(b.labels));
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericalError("finetune: non-finite loss in epoch " + std::to_string(epoch));
        }
        loss.backward();
        optimizer.step(params, config.lr);
        loss_sum += value;
        ++batches;
      }
      report.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
  } catch (...) {
    for (std::size_t i = 0; i < params.names().size(); ++i) {
      params.set_trainable(params.names()[i], was_trainable[i]);
    }
    throw;
  }
  for (std::size_t i = 0; i < params.names().size(); ++i) {
    params.set_trainable(params.names()[i], was_trainable[i]);
  }
  params.clear_grad();
  report.train_accuracy = classification_accuracy(model, train, config.batch_size);
  report.test_accuracy = classification_accuracy(model, test, config.batch_size);
  return report;
}

std::string metric_json(const MetricReport& report) {
  nlohmann::ordered_json out;
  out["metric"] = report.metric;
  out["value"] = report.value;
  out["n"] = report.n;
  out["per_item"] = report.per_item;
  return out.dump();
}

}  // namespace gfolds
