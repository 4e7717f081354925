// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "gfolds/errors.hpp"
#include "gfolds/eval.hpp"
#include "gfolds/jsonl.hpp"
#include "support/datasets.hpp"
#include "support/graph_fixtures.hpp"

using namespace gfolds;
using gfolds::testing::node;
using gfolds::testing::random_doc;
using gfolds::testing::temp_dir;

namespace {

ModelConfig eval_model(std::size_t vocab = 30) {
  ModelConfig c;
  c.d_model = 16;
  c.d_swa = 8;
  c.n_heads = 2;
  c.n_swa_layers = 1;
  c.n_encoder_layers = 1;
  c.ff_inner_encoder = 32;
  c.ff_inner_swa = 16;
  c.vocab_size = vocab;
  c.n_features = 4;
  return c;
}

// Precision at every rank recomputed from scratch by counting the prefix.
double brute_force_ap(const std::vector<std::uint8_t>& rel) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t r = 1; r <= rel.size(); ++r) {
    if (rel[r - 1] == 0) {
      continue;
    }
    std::size_t in_prefix = 0;
    for (std::size_t j = 0; j < r; ++j) {
      in_prefix += rel[j];
    }
    sum += static_cast<double>(in_prefix) / static_cast<double>(r);
    ++n;
  }
  return sum / static_cast<double>(n);
}

RankingInstance query_instance(Rng& rng, std::size_t n) {
  RankingInstance inst;
  inst.graph = random_doc(rng, n, Vocabulary::kNumReserved, 30, 4, 8, 0.4);
  inst.query_node = rng.below(n);
  inst.graph.nodes[inst.query_node].label = Vocabulary::kMask;
  return inst;
}

}  // namespace

TEST_CASE("average precision") {
  CHECK(average_precision(std::vector<std::uint8_t>{1, 1, 1, 0, 0}) == 1.0);
  CHECK(average_precision(std::vector<std::uint8_t>{1}) == 1.0);
  CHECK(average_precision(std::vector<std::uint8_t>{1, 0, 1}) ==
        doctest::Approx(0.8333333333333334).epsilon(1e-15));
  CHECK(average_precision(std::vector<std::uint8_t>{0, 1}) == 0.5);
  CHECK_THROWS_AS(average_precision(std::vector<std::uint8_t>{0, 0}), DomainError);
  CHECK_THROWS_AS(average_precision(std::vector<std::uint8_t>{}), DomainError);
}

TEST_CASE("average precision equals the prefix-counting oracle") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    const double density = rng.uniform();
    std::vector<std::uint8_t> rel(n);
    for (auto& r : rel) {
      r = rng.bernoulli(density) ? 1 : 0;
    }
    rel[rng.below(n)] = 1;
    CHECK(average_precision(rel) == brute_force_ap(rel));
  }
}

TEST_CASE("MAP over terms") {
  // Property p belongs to term gold[p].
  const std::vector<std::size_t> gold{0, 0, 1};
  const std::vector<std::vector<double>> perfect{{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}};
  CHECK(map_from_scores(perfect, gold, 2).map == 1.0);

  // Term 0 ranks properties 0, 2, 1 -> relevant at ranks 1 and 3.
  const std::vector<std::vector<double>> mixed{{0.9, 0.1}, {0.1, 0.2}, {0.5, 0.9}};
  const auto r = map_from_scores(mixed, gold, 2);
  CHECK(r.per_term[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(r.per_term[1] == 1.0);
  CHECK(r.map == doctest::Approx((5.0 / 6.0 + 1.0) / 2).epsilon(1e-15));

  CHECK_THROWS_AS(map_from_scores(perfect, std::vector<std::size_t>{0, 0, 0}, 2), DomainError);

  RetrievalDataset bad;
  bad.terms = {5, 6};
  bad.properties.push_back({RankingInstance{}, 5, ""});
  CHECK_THROWS_AS(bad.validate(), SchemaError);
}

TEST_CASE("masked ranking") {
  GfoldsModel<float> model(eval_model(), 4);
  Rng rng(6);
  auto inst = query_instance(rng, 6);

  const auto full = masked_rank(model, inst);
  CHECK(full.size() == 30 - Vocabulary::kNumReserved);
  double total = 0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full[i].score >= 0.0);
    total += full[i].score;
    if (i > 0) {
      CHECK((full[i - 1].score > full[i].score ||
             (full[i - 1].score == full[i].score && full[i - 1].token < full[i].token)));
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  inst.candidates = {17, 9, 22, 9};
  const auto filtered = masked_rank(model, inst);
  CHECK(filtered.size() == 3);
  double ftotal = 0;
  for (const auto& r : filtered) {
    ftotal += r.score;
  }
  CHECK(ftotal == doctest::Approx(1.0).epsilon(1e-6));

  inst.candidates = {11};
  const auto single = masked_rank(model, inst);
  REQUIRE(single.size() == 1);
  CHECK(single[0].token == 11);

  RankOptions raw;
  raw.renormalize = false;
  inst.candidates = {3, 4};
  const auto logits = masked_rank(model, inst, raw);
  CHECK(std::abs(logits[0].score - logits[1].score) > 0.0);

  inst.candidates = {30};
  CHECK_THROWS_AS(masked_rank(model, inst), IndexError);
  inst.candidates.clear();
  inst.graph.nodes[inst.query_node].label = 7;
  CHECK_THROWS_AS(masked_rank(model, inst), SchemaError);
}

TEST_CASE("uniform logits rank by token id") {
  GfoldsModel<float> model(eval_model(), 4);
  for (auto& x : model.params().get("mnm.out.weight").mutable_data()) {
    x = 0.0f;
  }
  for (auto& x : model.params().get("mnm.out.bias").mutable_data()) {
    x = 0.0f;
  }
  Rng rng(2);
  const auto ranked = masked_rank(model, query_instance(rng, 5));
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].token == static_cast<TokenId>(i) + Vocabulary::kNumReserved);
  }
}

TEST_CASE("precision at k") {
  std::vector<RankedToken> ranked;
  for (TokenId t = 0; t < 20; ++t) {
    ranked.push_back({t, 1.0 / (t + 1)});
  }
  const TokenClass not_seven = [](TokenId t) { return t != 7; };
  CHECK(precision_at_k(ranked, not_seven, 10) == doctest::Approx(0.9).epsilon(1e-15));
  const TokenClass everything = [](TokenId) { return true; };
  CHECK(precision_at_k(ranked, everything, 20) == 1.0);
  CHECK_NOTHROW(precision_at_k(ranked, everything, 14));
  CHECK_NOTHROW(precision_at_k(ranked, everything, 13));
  CHECK_THROWS_AS(precision_at_k(ranked, everything, 21), ConfigError);
  CHECK_THROWS_AS(precision_at_k(ranked, everything, 0), ConfigError);

  // Enlarging the class never lowers the score.
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> small(20);
    std::vector<bool> large(20);
    for (std::size_t i = 0; i < 20; ++i) {
      small[i] = rng.bernoulli(0.3);
      large[i] = small[i] || rng.bernoulli(0.3);
    }
    const std::size_t k = 1 + rng.below(20);
    const double a = precision_at_k(ranked, [&](TokenId t) { return small[t]; }, k);
    const double b = precision_at_k(ranked, [&](TokenId t) { return large[t]; }, k);
    CHECK(a <= b);
  }

  GfoldsModel<float> model(eval_model(), 4);
  auto inst = query_instance(rng, 5);
  CHECK(precision_at_k(model, inst, everything, 27) == 1.0);
  CHECK_THROWS_AS(precision_at_k(model, inst, everything, 28), ConfigError);
}

TEST_CASE("token classes from the lexicon") {
  Vocabulary vocab({"_a_q", "_all_q", "_the_q", "_dog_n_1", "_run_v_1", "_big_a_1"},
                   {"NUM=sg"});
  const auto sg = quantifier_class(vocab, QuantNumber::kSingular);
  const auto pl = quantifier_class(vocab, QuantNumber::kPlural);
  const auto id = [&](const char* s) { return *vocab.token_id(s); };
  CHECK(sg(id("_a_q")));
  CHECK_FALSE(sg(id("_all_q")));
  CHECK(sg(id("_the_q")));
  CHECK(pl(id("_the_q")));
  CHECK(pl(id("_all_q")));
  CHECK_FALSE(pl(id("_dog_n_1")));
  const auto nouns = class_by_name(vocab, "noun");
  CHECK(nouns(id("_dog_n_1")));
  CHECK_FALSE(nouns(id("_run_v_1")));
  CHECK_FALSE(nouns(Vocabulary::kMask));
  CHECK_THROWS_AS(class_by_name(vocab, "adverbish"), ConfigError);
}

TEST_CASE("veridicality binarization") {
  std::vector<std::string> six_four(6, "yes");
  six_four.insert(six_four.end(), 4, "no");
  CHECK(binarize_veridicality(six_four) == 1);
  CHECK(binarize_veridicality(std::vector<std::string>(10, "maybe")) == 0);
  CHECK(binarize_veridicality(std::vector<std::string>(10, "yes")) == 1);
  CHECK(binarize_veridicality(std::vector<std::string>{"yes", "no"}) == 0);
  CHECK(binarize_veridicality(std::vector<std::string>{"yes", "maybe", "no", "yes"}) == 1);
  CHECK_THROWS_AS(binarize_veridicality(std::vector<std::string>{"yes", "perhaps"}), SchemaError);
  CHECK_THROWS_AS(binarize_veridicality(std::vector<std::string>{}), SchemaError);

  Rng rng(3);
  const std::vector<std::string> kinds{"yes", "maybe", "no"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> labels(1 + rng.below(12));
    for (auto& l : labels) {
      l = kinds[rng.below(3)];
    }
    const int before = binarize_veridicality(labels);
    rng.shuffle(std::span(labels));
    CHECK(binarize_veridicality(labels) == before);
  }
}

TEST_CASE("fine-tuning") {
  const auto train = gfolds::testing::separable_graphs(128, 1, Vocabulary::kNumReserved, 30, 4);
  const auto test = gfolds::testing::separable_graphs(64, 2, Vocabulary::kNumReserved, 30, 4);

  SUBCASE("frozen encoder moves only the head") {
    GfoldsModel<float> model(eval_model(), 4);
    FinetuneConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.freeze_encoder = true;
    std::vector<std::string> body;
    for (const auto& name : model.params().names()) {
      body.push_back(name);
    }
    const auto before = checksum(model.params(), body);
    finetune_classifier(model, train, test, cfg);
    CHECK(checksum(model.params(), body) == before);
    std::vector<std::string> head;
    for (const auto& name : model.params().names()) {
      if (GfoldsModel<float>::is_classifier_param(name)) {
        head.push_back(name);
      }
    }
    GfoldsModel<float> fresh(eval_model(), 4);
    fresh.add_classifier(2, cfg.seed);
    CHECK(checksum(model.params(), head) != checksum(fresh.params(), head));
  }

  SUBCASE("end-to-end training separates marker classes") {
    GfoldsModel<float> model(eval_model(), 4);
    FinetuneConfig cfg;
    cfg.epochs = 5;
    cfg.lr = 3e-3;
    cfg.weight_decay = 0;
    cfg.batch_size = 8;
    const auto mnm_before = checksum(model.params(), std::vector<std::string>{"mnm.out.weight"});
    const auto report = finetune_classifier(model, train, test, cfg);
    CHECK(report.epoch_loss.size() == 5);
    CHECK(report.epoch_loss.back() < report.epoch_loss.front());
    CHECK(report.test_accuracy > 0.9);
    CHECK_FALSE(report.degenerate);
    CHECK(checksum(model.params(), std::vector<std::string>{"mnm.out.weight"}) == mnm_before);
    for (const auto& name : model.params().names()) {
      CHECK(model.params().trainable(name));
    }
  }

  SUBCASE("single-class training data is flagged") {
    auto one = train;
    for (auto& item : one) {
      item.label = 1;
    }
    GfoldsModel<float> model(eval_model(), 4);
    FinetuneConfig cfg;
    cfg.epochs = 1;
    const auto report = finetune_classifier(model, one, test, cfg);
    CHECK(report.degenerate);
    CHECK(report.class_counts == std::vector<std::size_t>{0, 128});
  }

  SUBCASE("bad labels and configs") {
    auto bad = train;
    bad[0].label = 2;
    GfoldsModel<float> model(eval_model(), 4);
    CHECK_THROWS_AS(finetune_classifier(model, bad, test, FinetuneConfig{}), SchemaError);
    CHECK_THROWS_AS(finetune_classifier(model, {}, test, FinetuneConfig{}), EmptyBatchError);
    FinetuneConfig three;
    three.num_classes = 3;
    model.add_classifier(2, 0);
    CHECK_THROWS_AS(finetune_classifier(model, train, test, three), ConfigError);
  }
}

TEST_CASE("fine-tune config") {
  FinetuneConfig d;
  CHECK(d.epochs == 8);
  CHECK(d.lr == 1e-6);
  CHECK(d.weight_decay == 1e-5);
  CHECK(d.batch_size == 16);
  CHECK_NOTHROW(d.validate());
  d.freeze_encoder = true;
  d.seed = 77;
  CHECK(FinetuneConfig::from_kv(d.to_kv()) == d);
  d.lr = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("evaluation data files") {
  const auto dir = temp_dir("eval-files");
  Vocabulary vocab({"_dog_n_1", "_cat_n_1", "_bark_v_1", "_a_q", "_the_q"}, {"NUM=sg"});

  RawGraph prop{"p1", 1,
                {node("[MASK]"), node("_bark_v_1"), node("focus_d"), node("_the_q")},
                {{1, 0, "ARG1"}, {3, 0, "RSTR"}, {2, 1, "ARG1"}}};
  RawGraph prop2 = prop;
  prop2.id = "p2";
  prop2.nodes = {node("focus_d"), node("_bark_v_1"), node("[MASK]")};
  prop2.edges = {{1, 2, "ARG1"}};
  {
    std::ofstream out(dir / "rel.jsonl");
    nlohmann::json a;
    a["term"] = "_dog_n_1";
    a["hypernym"] = "_animal_n_1";
    a["property_graph"] = nlohmann::json::parse(raw_graph_to_json(prop));
    a["query_node"] = 0;
    nlohmann::json b = a;
    b["term"] = "_cat_n_1";
    b["property_graph"] = nlohmann::json::parse(raw_graph_to_json(prop2));
    b["query_node"] = 2;
    out << a.dump() << "\n\n" << b.dump() << "\n";
  }
  const auto ds = read_retrieval_jsonl(dir / "rel.jsonl", vocab);
  CHECK(ds.terms.size() == 2);
  REQUIRE(ds.properties.size() == 2);
  CHECK(ds.properties[1].instance.query_node == 1);
  CHECK(ds.properties[1].instance.graph.nodes.size() == 2);
  CHECK(ds.properties[0].hypernym == "_animal_n_1");

  auto mc = eval_model(vocab.size());
  mc.n_features = vocab.num_features();
  GfoldsModel<float> model(mc, 1);
  const auto res = map_score(model, ds);
  CHECK(res.per_term.size() == 2);
  CHECK(res.map > 0.0);
  CHECK(res.map <= 1.0);

  {
    std::ofstream out(dir / "bad.jsonl");
    nlohmann::json a;
    a["term"] = "_dog_n_1";
    a["property_graph"] = nlohmann::json::parse(raw_graph_to_json(prop));
    a["query_node"] = 1;
    out << a.dump() << "\n";
  }
  try {
    read_retrieval_jsonl(dir / "bad.jsonl", vocab);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }

  {
    std::ofstream out(dir / "lab.jsonl");
    RawGraph g{"g", 0, {node("_bark_v_1"), node("_dog_n_1", {"NUM=sg"})}, {{0, 1, "ARG1"}}};
    nlohmann::json a;
    a["graph"] = nlohmann::json::parse(raw_graph_to_json(g));
    a["label"] = 1;
    nlohmann::json b;
    b["premise"] = a["graph"];
    b["hypothesis"] = a["graph"];
    b["labels"] = {"yes", "no", "maybe", "no"};
    out << a.dump() << "\n" << b.dump() << "\n";
  }
  const auto labeled = read_labeled_jsonl(dir / "lab.jsonl", vocab);
  REQUIRE(labeled.size() == 2);
  CHECK(labeled[0].label == 1);
  CHECK(labeled[1].label == 0);
  CHECK(labeled[1].graph.nodes.size() == 5);

  {
    std::ofstream out(dir / "cls.jsonl");
    nlohmann::json a;
    a["graph"] = nlohmann::json::parse(raw_graph_to_json(prop));
    a["query_node"] = 0;
    a["class"] = "singular";
    out << a.dump() << "\n";
  }
  const auto cls = read_class_jsonl(dir / "cls.jsonl", vocab);
  REQUIRE(cls.size() == 1);
  CHECK(cls[0].class_name == "singular");
}

TEST_CASE("metric JSON") {
  MetricReport r{"map", 0.5, 2, {0.25, 0.75}};
  CHECK(metric_json(r) == R"({"metric":"map","value":0.5,"n":2,"per_item":[0.25,0.75]})");
}
