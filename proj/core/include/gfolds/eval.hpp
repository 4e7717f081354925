// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gfolds/graph.hpp"
#include "gfolds/kv_config.hpp"
#include "gfolds/lexicon.hpp"
#include "gfolds/model.hpp"
#include "gfolds/vocab.hpp"

namespace gfolds {

// A graph whose node `query_node` carries [MASK]; `candidates` restricts
// the ranking (empty = every non-reserved token).
struct RankingInstance {
  GraphDoc graph;
  std::size_t query_node = 0;
  TokenId gold = Vocabulary::kMask;
  std::vector<TokenId> candidates;
};

struct RankedToken {
  TokenId token = 0;
  double score = 0.0;
  bool operator==(const RankedToken&) const = default;
};

struct RankOptions {
  // Softmax renormalized over the candidate set; otherwise the raw logit is
  // the score.
  bool renormalize = true;
};

// Descending score, ties broken by ascending token id. Throws SchemaError
// when the query node is missing or not [MASK], IndexError on a candidate
// outside the vocabulary.
std::vector<RankedToken> masked_rank(const GfoldsModel<float>& model, const RankingInstance& inst,
                                     const RankOptions& options = {});

// `relevant[i]` flags the item at rank i + 1. Mean over relevant ranks r of
// (relevant items at ranks <= r) / r. Throws DomainError without any
// relevant item.
double average_precision(std::span<const std::uint8_t> relevant);
double mean_of(std::span<const double> values);

struct RetrievalProperty {
  RankingInstance instance;
  TokenId term = 0;
  std::string hypernym;
};

struct RetrievalDataset {
  std::vector<TokenId> terms;
  std::vector<RetrievalProperty> properties;
  // Throws SchemaError when a property's term is not among `terms` or a
  // term has no property.
  void validate() const;
};

struct MapResult {
  double map = 0.0;
  std::vector<double> per_term;  // in `terms` order
};

// scores[p][t]: score of term t for property p. For each term, properties
// are ranked by descending score (ties by property index) and scored by
// average precision against `gold` (the term index of each property).
MapResult map_from_scores(const std::vector<std::vector<double>>& scores,
                          std::span<const std::size_t> gold, std::size_t num_terms);

// Each property's query distribution is restricted to the dataset terms.
MapResult map_score(const GfoldsModel<float>& model, const RetrievalDataset& dataset,
                    const RankOptions& options = {});

// Lines: {"term": str, "hypernym": str, "property_graph": <raw graph>,
// "query_node": int}. Terms are collected in first-appearance order.
RetrievalDataset read_retrieval_jsonl(const std::filesystem::path& path, const Vocabulary& vocab);

using TokenClass = std::function<bool(TokenId)>;

// Fraction of the top-k ranked tokens inside the class. Throws ConfigError
// when k is zero or exceeds the ranked list.
double precision_at_k(const GfoldsModel<float>& model, const RankingInstance& inst,
                      const TokenClass& in_class, std::size_t k);
double precision_at_k(std::span<const RankedToken> ranked, const TokenClass& in_class,
                      std::size_t k);

TokenClass pos_class(const Vocabulary& vocab, Pos pos);
// Quantifiers of number `target` plus those usable with either number.
TokenClass quantifier_class(const Vocabulary& vocab, QuantNumber target);

// Lines: {"graph": <raw graph>, "query_node": int, "class": str, "gold": str?}
// where class is a part of speech name, "singular" or "plural".
struct ClassInstance {
  RankingInstance instance;
  std::string class_name;
};
std::vector<ClassInstance> read_class_jsonl(const std::filesystem::path& path,
                                            const Vocabulary& vocab);
TokenClass class_by_name(const Vocabulary& vocab, const std::string& name);

// yes -> 1, maybe -> 0, no -> -1; 1 iff the mean is positive. Throws
// SchemaError on an empty set or an unknown label.
int binarize_veridicality(std::span<const std::string> labels);

struct LabeledGraph {
  GraphDoc graph;
  int label = 0;
};

// Lines: {"graph": <raw graph>, "label": int} or
// {"premise": <raw graph>, "hypothesis": <raw graph>, "label": int}; pairs
// are merged. A "labels" array of yes/maybe/no annotations may stand in for
// "label" and is binarized.
std::vector<LabeledGraph> read_labeled_jsonl(const std::filesystem::path& path,
                                             const Vocabulary& vocab);

struct FinetuneConfig {
  std::size_t epochs = 8;
  double lr = 1e-6;
  double weight_decay = 1e-5;
  std::size_t batch_size = 16;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;

  void validate() const;
  KeyValueConfig to_kv() const;
  static FinetuneConfig from_kv(const KeyValueConfig& kv);
  static const std::vector<std::string_view>& kv_keys();
  bool operator==(const FinetuneConfig&) const = default;
};

struct FinetuneReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::size_t> class_counts;
  bool degenerate = false;  // training labels cover a single class
};

// End-to-end training of a mean-pooled classifier head (added when the
// model has none). With freeze_encoder only the head moves; the MNM head is
// never updated. Throws SchemaError on labels outside [0, num_classes) and
// EmptyBatchError on an empty training set.
FinetuneReport finetune_classifier(GfoldsModel<float>& model, std::span<const LabeledGraph> train,
                                   std::span<const LabeledGraph> test,
                                   const FinetuneConfig& config);

std::vector<int> predict_classes(const GfoldsModel<float>& model,
                                 std::span<const LabeledGraph> data, std::size_t batch_size = 16);
double classification_accuracy(const GfoldsModel<float>& model, std::span<const LabeledGraph> data,
                               std::size_t batch_size = 16);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::vector<double> per_item;
};

// {"metric": str, "value": float, "n": int, "per_item": [float]}
std::string metric_json(const MetricReport& report);

}  // namespace gfolds
