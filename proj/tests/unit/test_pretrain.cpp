// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gfolds/errors.hpp"
#include "gfolds/pretrain.hpp"
#include "gfolds/vocab.hpp"
#include "support/graph_fixtures.hpp"

using namespace gfolds;
using gfolds::testing::random_doc;
using gfolds::testing::temp_dir;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.d_model = 16;
  c.d_swa = 8;
  c.n_heads = 2;
  c.n_swa_layers = 1;
  c.n_encoder_layers = 1;
  c.ff_inner_encoder = 32;
  c.ff_inner_swa = 16;
  c.vocab_size = 30;
  c.n_features = 4;
  return c;
}

std::vector<GraphDoc> small_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GraphDoc> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto g = random_doc(rng, 3 + rng.below(6), Vocabulary::kNumReserved, 30, 4, 8, 0.4);
    g.id = "g" + std::to_string(100 + i);
    out.push_back(std::move(g));
  }
  return out;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_size = 4;
  t.epochs = 3;
  t.selection_prob = 0.3;
  t.lr_knots = {{0.0, 1e-3}, {3.0, 1e-4}};
  t.seed = 42;
  return t;
}

}  // namespace

TEST_CASE("learn-rate schedule passes through the default knots") {
  TrainConfig c;
  for (std::size_t spe : {1, 7, 10, 1000}) {
    CHECK(lr_at(0, spe, c) == 1e-5);
    CHECK(lr_at(1 * spe, spe, c) == 2e-5);
    CHECK(lr_at(2 * spe, spe, c) == 1e-5);
    CHECK(lr_at(3 * spe, spe, c) == 3e-6);
    CHECK(lr_at(4 * spe, spe, c) == 1e-6);
    CHECK(lr_at(40 * spe, spe, c) == 1e-6);
  }
  CHECK(lr_at(5, 10, c) == doctest::Approx(1.5e-5).epsilon(1e-12));
  CHECK(lr_at(25, 10, c) == doctest::Approx(6.5e-6).epsilon(1e-12));

  c.lr_knots = {{0.0, 3e-4}, {2.0, 3e-4}};
  for (std::size_t s = 0; s < 50; ++s) {
    CHECK(lr_at(s, 9, c) == 3e-4);
  }
  CHECK_THROWS_AS(lr_at(1, 0, c), ConfigError);
}

TEST_CASE("train config validation and key-value round trip") {
  TrainConfig c;
  c.seed = 123456789012345ULL;
  c.lr_knots = {{0.0, 1e-4}, {0.5, 2.5e-4}, {3.0, 1e-7}};
  c.selection_prob = 0.15;
  CHECK(TrainConfig::from_kv(c.to_kv()) == c);

  auto bad = c;
  bad.selection_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.lr_knots = {{1.0, 1e-4}, {0.5, 1e-4}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.lr_knots = {{0.0, 0.0}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  auto kv = c.to_kv();
  kv.set("lr_knots", "0:1e-4,nonsense");
  CHECK_THROWS_AS(TrainConfig::from_kv(kv), ConfigError);
}

TEST_CASE("selection and masking") {
  auto corpus = small_corpus(20, 5);
  TrainConfig c;

  SUBCASE("rate zero selects nothing") {
    c.selection_prob = 0.0;
    Rng rng(1);
    const auto m = select_and_mask(corpus, c, rng);
    CHECK_FALSE(m.has_targets());
    CHECK(m.maskable > 0);
  }

  SUBCASE("fixed seed gives the same targets") {
    GraphDoc g{"five", {{3, {}}, {4, {1}}, {5, {}}, {6, {2}}, {7, {}}}, {}, 0};
    c.selection_prob = 0.5;
    std::vector<std::pair<std::size_t, std::size_t>> first;
    for (int run = 0; run < 3; ++run) {
      Rng rng = Rng(9).split("mask");
      const auto m = select_and_mask(std::span(&g, 1), c, rng);
      std::vector<std::pair<std::size_t, std::size_t>> got;
      for (const auto& t : m.targets) {
        got.emplace_back(t.graph, t.node);
      }
      if (run == 0) {
        first = got;
      }
      CHECK(got == first);
    }
  }

  SUBCASE("targets are masked, keep features, and never pre-masked nodes") {
    for (auto& g : corpus) {
      g.nodes[0].label = Vocabulary::kMask;
    }
    c.selection_prob = 0.5;
    Rng rng(3);
    const auto m = select_and_mask(corpus, c, rng);
    REQUIRE(m.has_targets());
    for (const auto& t : m.targets) {
      CHECK(corpus[t.graph].nodes[t.node].label != Vocabulary::kMask);
      CHECK(m.graphs[t.graph].nodes[t.node].label == Vocabulary::kMask);
      CHECK(m.graphs[t.graph].nodes[t.node].features == corpus[t.graph].nodes[t.node].features);
      CHECK(t.token == corpus[t.graph].nodes[t.node].label);
      CHECK(m.batch.labels[m.batch.row(t.graph, t.node)] == Vocabulary::kMask);
    }
    std::size_t reserved = 0;
    std::size_t total = 0;
    for (const auto& g : corpus) {
      for (const auto& n : g.nodes) {
        reserved += Vocabulary::is_reserved(n.label);
        ++total;
      }
    }
    CHECK(m.maskable == total - reserved);
  }

  SUBCASE("partial mask rate leaves some selected labels visible") {
    c.selection_prob = 1.0;
    c.mask_rate_of_selected = 0.5;
    Rng rng(4);
    const auto m = select_and_mask(corpus, c, rng);
    std::size_t visible = 0;
    for (const auto& t : m.targets) {
      visible += m.graphs[t.graph].nodes[t.node].label != Vocabulary::kMask;
    }
    CHECK(visible > 0);
    CHECK(visible < m.targets.size());
  }
}

TEST_CASE("masked fraction concentrates at the selection probability") {
  Rng gen(77);
  std::vector<GraphDoc> corpus;
  std::size_t pre_masked = 0;
  std::size_t nodes = 0;
  while (nodes < 12000) {
    auto g = random_doc(gen, 4 + gen.below(10), Vocabulary::kNumReserved, 50, 4, 8, 0.2);
    for (auto& n : g.nodes) {
      if (gen.bernoulli(0.05)) {
        n.label = Vocabulary::kMask;
        ++pre_masked;
      }
    }
    nodes += g.nodes.size();
    corpus.push_back(std::move(g));
  }
  TrainConfig c;
  Rng rng(2);
  const auto m = select_and_mask(corpus, c, rng);
  CHECK(m.maskable == nodes - pre_masked);
  CHECK(m.maskable >= 10000);
  const double frac = static_cast<double>(m.targets.size()) / static_cast<double>(m.maskable);
  CHECK(std::abs(frac - 0.2) <= 0.012);
  for (const auto& t : m.targets) {
    CHECK(t.token != Vocabulary::kMask);
  }
}

TEST_CASE("MNM loss covers exactly the targets") {
  GfoldsModel<float> model(small_model(), 1);
  auto corpus = small_corpus(6, 8);
  TrainConfig c;
  c.selection_prob = 0.4;
  Rng rng(6);
  const auto m = select_and_mask(corpus, c, rng);
  REQUIRE(m.has_targets());
  const auto out = mnm_loss(model, m);
  CHECK(out.logits.shape() == Shape{m.targets.size(), 30});
  CHECK(std::isfinite(out.loss.item()));

  // Changing a non-target label alters context but not the target set.
  std::set<std::pair<std::size_t, std::size_t>> targets;
  for (const auto& t : m.targets) {
    targets.insert({t.graph, t.node});
  }
  auto edited = m;
  for (std::size_t i = 0; i < edited.graphs[0].nodes.size(); ++i) {
    if (!targets.contains({0, i})) {
      edited.graphs[0].nodes[i].label = 29;
      edited.batch = make_batch(edited.graphs);
      break;
    }
  }
  const auto out2 = mnm_loss(model, edited);
  CHECK(out2.logits.shape() == out.logits.shape());

  TrainConfig none;
  none.selection_prob = 0.0;
  Rng rng2(1);
  CHECK_THROWS_AS(mnm_loss(model, select_and_mask(corpus, none, rng2)), EmptyBatchError);
}

TEST_CASE("training is deterministic and independent of corpus order") {
  const auto corpus = small_corpus(18, 11);
  auto shuffled = corpus;
  Rng r(5);
  r.shuffle(std::span(shuffled));

  GfoldsModel<float> a(small_model(), 3);
  GfoldsModel<float> b(small_model(), 3);
  GfoldsModel<float> s(small_model(), 3);
  Pretrainer pa(a, quick_train(), corpus);
  Pretrainer pb(b, quick_train(), corpus);
  Pretrainer ps(s, quick_train(), shuffled);
  const auto ta = pa.run();
  const auto tb = pb.run();
  const auto ts = ps.run();
  CHECK(pa.steps_per_epoch() == 5);
  CHECK(ta.size() + pa.skipped_batches() == 15);
  CHECK(ta == tb);
  CHECK(ta == ts);
  CHECK(checksum(a.params()) == checksum(b.params()));
  CHECK(checksum(a.params()) == checksum(s.params()));
  for (const auto& row : ta) {
    CHECK(row.lr == lr_at(row.step, 5, quick_train()));
  }
}

TEST_CASE("rate zero skips every batch") {
  auto t = quick_train();
  t.selection_prob = 0.0;
  GfoldsModel<float> m(small_model(), 3);
  const auto before = checksum(m.params());
  Pretrainer p(m, t, small_corpus(8, 2));
  CHECK(p.run().empty());
  CHECK(p.skipped_batches() == p.total_steps());
  CHECK(checksum(m.params()) == before);
}

TEST_CASE("oversized graphs are skipped") {
  auto t = quick_train();
  auto corpus = small_corpus(8, 2);
  t.max_nodes = 5;
  std::size_t keep = 0;
  for (const auto& g : corpus) {
    keep += g.nodes.size() <= 5;
  }
  GfoldsModel<float> m(small_model(), 3);
  Pretrainer p(m, t, corpus);
  CHECK(p.skipped_graphs() == corpus.size() - keep);
  t.max_nodes = 1;
  CHECK_THROWS_AS(Pretrainer(m, t, corpus), EmptyBatchError);
}

TEST_CASE("non-finite loss aborts naming the step") {
  GfoldsModel<float> m(small_model(), 3);
  Pretrainer p(m, quick_train(), small_corpus(8, 2));
  p.run(2);
  m.params().get("mnm.out.bias").mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    p.run();
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip and resume bitwise") {
  const auto dir = temp_dir("pretrain-ckpt");
  const auto corpus = small_corpus(20, 13);
  auto t = quick_train();
  t.epochs = 4;
  t.checkpoint_every = 4;

  GfoldsModel<float> full(small_model(), 5);
  Pretrainer pf(full, t, corpus);
  pf.set_checkpoint_dir(dir);
  const auto trace = pf.run();
  REQUIRE(pf.checkpoints().size() == 5);
  CHECK(std::filesystem::exists(dir / "ckpt-8.gfld"));
  CHECK(std::filesystem::exists(dir / "ckpt-8.gfld.cfg"));

  const auto ck = load_checkpoint(dir / "ckpt-8.gfld");
  CHECK(ck.position == 8);
  CHECK(ck.model == small_model());
  CHECK(ck.train == t);

  GfoldsModel<float> resumed(small_model(), 999);
  Pretrainer pr(resumed, t, corpus);
  pr.resume(ck);
  const auto tail = pr.run(12);
  std::vector<TraceRow> expected;
  for (const auto& row : trace) {
    if (row.step >= 8) {
      expected.push_back(row);
    }
  }
  CHECK(tail.size() >= 10);
  CHECK(tail == expected);
  CHECK(checksum(resumed.params()) == checksum(full.params()));

  // Plain save/load is bitwise.
  pf.save(dir / "final.gfld");
  const auto last = load_checkpoint(dir / "final.gfld");
  CHECK(checksum(last.params) == checksum(full.params()));
  for (const auto& [name, mom] : pf.optimizer().moments()) {
    CHECK(last.moments.at(name).m == mom.m);
    CHECK(last.moments.at(name).v == mom.v);
  }

  auto other = small_model();
  other.vocab_size = 31;
  GfoldsModel<float> wrong(other, 1);
  Pretrainer pw(wrong, t, corpus);
  CHECK_THROWS_AS(pw.resume(ck), ConfigError);
  CHECK_THROWS_AS(GfoldsModel<float>(other, load_checkpoint(dir / "ckpt-8.gfld").params.clone()),
                  ConfigError);

  {
    std::ifstream in(dir / "ckpt-8.gfld", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(dir / "cut.gfld", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  std::filesystem::copy_file(dir / "ckpt-8.gfld.cfg", dir / "cut.gfld.cfg");
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.gfld"), FormatError);

  auto kv = KeyValueConfig::load(dir / "ckpt-8.gfld.cfg");
  kv.set("checkpoint_version", "7");
  kv.save(dir / "ckpt-8.gfld.cfg");
  CHECK_THROWS_AS(load_checkpoint(dir / "ckpt-8.gfld"), FormatError);
  std::filesystem::remove(dir / "ckpt-4.gfld.cfg");
  CHECK_THROWS_AS(load_checkpoint(dir / "ckpt-4.gfld"), ConfigError);
}

TEST_CASE("snapshots per epoch land at even fractions") {
  const auto dir = temp_dir("pretrain-snap");
  auto t = quick_train();
  t.epochs = 2;
  t.snapshots_per_epoch = 2;
  GfoldsModel<float> m(small_model(), 5);
  Pretrainer p(m, t, small_corpus(16, 1));
  p.set_checkpoint_dir(dir);
  p.run();
  std::vector<std::string> names;
  for (const auto& path : p.checkpoints()) {
    names.push_back(path.filename().string());
  }
  CHECK(names == std::vector<std::string>{"ckpt-2.gfld", "ckpt-4.gfld", "ckpt-6.gfld",
                                          "ckpt-8.gfld"});
}

TEST_CASE("trace CSV") {
  std::vector<TraceRow> rows{{0, 0.0, 1e-5, 4.5}, {1, 0.25, 1.25e-5, 3.0625}};
  std::ostringstream out;
  write_trace_csv(out, rows);
  CHECK(out.str() == "step,epoch_fraction,lr,loss\n0,0,1e-05,4.5\n1,0.25,1.25e-05,3.0625\n");
}
