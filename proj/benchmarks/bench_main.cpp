// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "gfolds/model.hpp"
#include "gfolds/ops.hpp"
#include "gfolds/preprocess.hpp"
#include "gfolds/pretrain.hpp"
#include "gfolds/rng.hpp"
#include "gfolds/scaling_laws.hpp"
#include "gfolds/synth.hpp"
#include "gfolds/vocab.hpp"

using namespace gfolds;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<float> v(rows * cols);
  for (auto& x : v) {
    x = static_cast<float>(rng.uniform() - 0.5);
  }
  return Tensor::from({rows, cols}, std::move(v));
}

struct Corpus {
  Vocabulary vocab;
  std::vector<RawGraph> raw;
  std::vector<GraphDoc> docs;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    SynthConfig sc;
    sc.num_graphs = 256;
    Corpus out;
    out.raw = generate_synthetic_corpus(sc, 1);
    out.vocab = build_vocabulary(out.raw);
    for (const auto& g : out.raw) {
      out.docs.push_back(preprocess(g, out.vocab));
    }
    return out;
  }();
  return c;
}

ModelConfig bench_model() {
  ModelConfig mc;
  mc.vocab_size = corpus().vocab.size();
  mc.n_features = corpus().vocab.num_features();
  return mc;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_matrix(n, n, rng);
  const auto b = random_matrix(n, n, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_Forward(benchmark::State& state) {
  const GfoldsModel<float> model(bench_model(), 3);
  const std::span<const GraphDoc> docs(corpus().docs.data(), static_cast<std::size_t>(state.range(0)));
  const auto batch = make_batch(docs);
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.mnm_logits(model.encode(batch)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Arg(64);

static void BM_TrainStep(benchmark::State& state) {
  GfoldsModel<float> model(bench_model(), 3);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 1000;
  tc.lr_knots = {{0.0, 1e-3}, {1000.0, 1e-3}};
  const std::span<const GraphDoc> docs(corpus().docs.data(), 16);
  Pretrainer trainer(model, tc, docs);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.run(1));
  }
}
BENCHMARK(BM_TrainStep);

static void BM_Preprocess(benchmark::State& state) {
  const auto& c = corpus();
  for (auto _ : state) {
    for (const auto& g : c.raw) {
      benchmark::DoNotOptimize(preprocess(g, c.vocab));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.raw.size()));
}
BENCHMARK(BM_Preprocess);

static void BM_ScalingRepeated(benchmark::State& state) {
  double n = 1e7;
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaling::loss_repeated(n, 1e10, 4, scaling::kMuennighoff));
    n = n < 1e11 ? n * 1.01 : 1e7;
  }
}
BENCHMARK(BM_ScalingRepeated);

static void BM_ScalingInversion(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaling::d_opt_for_params(1.74e8, scaling::kChinchilla));
  }
}
BENCHMARK(BM_ScalingInversion);

BENCHMARK_MAIN();
