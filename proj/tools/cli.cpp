// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "gfolds/errors.hpp"
#include "gfolds/eval.hpp"
#include "gfolds/jsonl.hpp"
#include "gfolds/log.hpp"
#include "gfolds/preprocess.hpp"
#include "gfolds/pretrain.hpp"
#include "gfolds/scaling_laws.hpp"
#include "gfolds/synth.hpp"
#include "gfolds/vocab.hpp"
#include "manifest.hpp"

namespace gfolds::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct SynthOptions {
  std::string out;
  std::string config;
  std::optional<std::size_t> num_graphs;
  std::optional<std::uint64_t> seed;
};

struct PreprocessOptions {
  std::string in;
  std::string out;
  std::string vocab;
  std::string vocab_out;
};

struct PretrainOptions {
  std::string corpus;
  std::string vocab;
  std::string config;
  std::string out_dir;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> eval_every;
  std::optional<std::size_t> checkpoint_every;
  std::size_t max_steps = 0;
};

struct EvalOptions {
  std::string model;
  std::string vocab;
  std::string data;
  std::string manifest;
  bool raw_logits = false;
  std::size_t k = 10;
  std::size_t batch_size = 16;
};

struct FinetuneOptions {
  std::string model;
  std::string vocab;
  std::string train;
  std::string test;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> weight_decay;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> num_classes;
  bool freeze_encoder = false;
};

struct CountOptions {
  std::string config;
  std::string vocab;
  std::string manifest;
  bool paper = false;
  std::optional<std::size_t> vocab_size;
  std::optional<std::size_t> n_features;
  std::size_t num_classes = 0;
};

struct ScalingOptions {
  std::string fit;
  std::string model_config;
  std::string corpus;
  std::string vocab;
  std::string unit = "nodes";
  std::string manifest;
  std::optional<double> params;
  std::optional<double> unique_data;
  double epochs = 1.0;
  std::optional<double> compute;
  std::optional<double> d_opt_for_params;
  std::optional<double> n_opt_for_data;
  bool audit = false;
};

struct Options {
  SynthOptions synth;
  PreprocessOptions preprocess;
  PretrainOptions pretrain;
  EvalOptions eval;
  FinetuneOptions finetune;
  CountOptions count;
  ScalingOptions scaling;
  bool verbose = false;
};

struct Apps {
  CLI::App* synth = nullptr;
  CLI::App* preprocess = nullptr;
  CLI::App* pretrain = nullptr;
  CLI::App* eval = nullptr;
  CLI::App* eval_map = nullptr;
  CLI::App* eval_precision = nullptr;
  CLI::App* eval_veridicality = nullptr;
  CLI::App* finetune = nullptr;
  CLI::App* count = nullptr;
  CLI::App* scaling = nullptr;
};

Apps build(CLI::App& app, Options& o) {
  Apps a;
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", o.verbose, "Log progress to stderr");

  a.synth = app.add_subcommand("synth", "Generate a synthetic DMRS-style corpus as JSONL");
  a.synth->add_option("--out", o.synth.out, "Output JSONL path")->required();
  a.synth->add_option("--config", o.synth.config, "Generator key-value file")
      ->check(CLI::ExistingFile);
  a.synth->add_option("--num-graphs", o.synth.num_graphs, "Number of graphs (overrides config)");
  a.synth->add_option("--seed", o.synth.seed, "Generator seed (falls back to GFOLDS_SEED)");

  a.preprocess = app.add_subcommand("preprocess", "Normalize raw graphs into model input");
  a.preprocess->add_option("--in", o.preprocess.in, "Raw graph JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  a.preprocess->add_option("--out", o.preprocess.out, "Preprocessed JSONL output")->required();
  auto* vocab_in = a.preprocess
                       ->add_option("--vocab", o.preprocess.vocab,
                                    "Existing vocabulary; labels outside it become [MASK]")
                       ->check(CLI::ExistingFile);
  auto* vocab_out = a.preprocess->add_option("--vocab-out", o.preprocess.vocab_out,
                                             "Build a vocabulary from the input and write it here");
  vocab_in->excludes(vocab_out);

  a.pretrain = app.add_subcommand("pretrain", "Masked-node pretraining");
  a.pretrain->add_option("--corpus", o.pretrain.corpus, "Preprocessed JSONL corpus")
      ->required()
      ->check(CLI::ExistingFile);
  a.pretrain->add_option("--vocab", o.pretrain.vocab, "Vocabulary file")
      ->required()
      ->check(CLI::ExistingFile);
  a.pretrain->add_option("--config", o.pretrain.config, "Key-value file with model.* and train.* keys")
      ->check(CLI::ExistingFile);
  a.pretrain->add_option("--out-dir", o.pretrain.out_dir, "Directory for checkpoints and trace")
      ->required();
  a.pretrain->add_option("--resume", o.pretrain.resume, "Checkpoint to continue from")
      ->check(CLI::ExistingFile);
  a.pretrain->add_option("--seed", o.pretrain.seed, "Run seed (falls back to GFOLDS_SEED)");
  a.pretrain->add_option("--epochs", o.pretrain.epochs, "Epochs (overrides config)");
  a.pretrain->add_option("--batch-size", o.pretrain.batch_size, "Graphs per batch (overrides config)");
  a.pretrain->add_option("--eval-every", o.pretrain.eval_every,
                         "Checkpoints at this many evenly spaced points per epoch");
  a.pretrain->add_option("--checkpoint-every", o.pretrain.checkpoint_every,
                         "Checkpoint every N batches");
  a.pretrain->add_option("--max-steps", o.pretrain.max_steps,
                         "Stop after this many batches (0 = full schedule)");

  a.eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  a.eval->require_subcommand(1);
  auto common = [&](CLI::App* sub) {
    sub->add_option("--model", o.eval.model, "Checkpoint path")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--vocab", o.eval.vocab, "Vocabulary file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--data", o.eval.data, "Evaluation JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--manifest", o.eval.manifest, "Write a run manifest here");
  };
  a.eval_map = a.eval->add_subcommand("map", "Mean average precision of term retrieval");
  common(a.eval_map);
  a.eval_map->add_flag("--raw-logits", o.eval.raw_logits,
                       "Score by raw logits instead of the renormalized softmax");
  a.eval_precision = a.eval->add_subcommand("precision", "Mean precision@k of a token class");
  common(a.eval_precision);
  a.eval_precision->add_option("--k", o.eval.k, "Cutoff rank")->check(CLI::PositiveNumber);
  a.eval_veridicality =
      a.eval->add_subcommand("veridicality", "Accuracy of a fine-tuned classifier");
  common(a.eval_veridicality);
  a.eval_veridicality->add_option("--batch-size", o.eval.batch_size, "Graphs per batch")
      ->check(CLI::PositiveNumber);

  a.finetune = app.add_subcommand("finetune", "Fine-tune a mean-pooled classifier");
  a.finetune->add_option("--model", o.finetune.model, "Pretrained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  a.finetune->add_option("--vocab", o.finetune.vocab, "Vocabulary file")
      ->required()
      ->check(CLI::ExistingFile);
  a.finetune->add_option("--train", o.finetune.train, "Labeled training JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  a.finetune->add_option("--test", o.finetune.test, "Labeled held-out JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  a.finetune->add_option("--config", o.finetune.config, "Fine-tuning key-value file")
      ->check(CLI::ExistingFile);
  a.finetune->add_option("--out", o.finetune.out, "Fine-tuned checkpoint path")->required();
  a.finetune->add_option("--seed", o.finetune.seed, "Seed (falls back to GFOLDS_SEED)");
  a.finetune->add_option("--epochs", o.finetune.epochs, "Epochs (overrides config)");
  a.finetune->add_option("--lr", o.finetune.lr, "Learn rate (overrides config)");
  a.finetune->add_option("--weight-decay", o.finetune.weight_decay,
                         "Weight decay (overrides config)");
  a.finetune->add_option("--batch-size", o.finetune.batch_size, "Graphs per batch (overrides config)");
  a.finetune->add_option("--num-classes", o.finetune.num_classes, "Classes (overrides config)");
  a.finetune->add_flag("--freeze-encoder", o.finetune.freeze_encoder, "Train the head only");

  a.count = app.add_subcommand("count-params", "Parameter count with a per-group breakdown");
  a.count->add_option("--config", o.count.config, "Key-value file with model.* keys")
      ->check(CLI::ExistingFile);
  a.count->add_flag("--paper", o.count.paper, "Start from the full-size reference configuration");
  a.count->add_option("--vocab", o.count.vocab, "Take vocabulary and feature sizes from this file")
      ->check(CLI::ExistingFile);
  a.count->add_option("--vocab-size", o.count.vocab_size, "Token vocabulary size");
  a.count->add_option("--n-features", o.count.n_features, "Feature vocabulary size");
  a.count->add_option("--num-classes", o.count.num_classes, "Include a classifier head");
  a.count->add_option("--manifest", o.count.manifest, "Write a run manifest here");

  a.scaling = app.add_subcommand("scaling", "Scaling-law queries");
  a.scaling->add_option("--fit", o.scaling.fit,
                        "Key-value file overriding E, A, B, alpha, beta, R_star_D, R_star_N")
      ->check(CLI::ExistingFile);
  a.scaling->add_option("--params", o.scaling.params, "Parameter count N");
  a.scaling->add_option("--model-config", o.scaling.model_config,
                        "Take N from a model key-value file")
      ->check(CLI::ExistingFile);
  a.scaling->add_option("--unique-data", o.scaling.unique_data, "Unique data U_D");
  a.scaling->add_option("--corpus", o.scaling.corpus, "Measure U_D on a preprocessed corpus")
      ->check(CLI::ExistingFile);
  a.scaling->add_option("--vocab", o.scaling.vocab, "Vocabulary for --corpus")
      ->check(CLI::ExistingFile);
  a.scaling->add_option("--unit", o.scaling.unit, "U_D unit for --corpus")
      ->check(CLI::IsMember({"nodes", "nodes+edges", "graphs"}));
  a.scaling->add_option("--epochs", o.scaling.epochs, "Repetitions r");
  a.scaling->add_option("--compute", o.scaling.compute, "Compute budget C in FLOPs");
  a.scaling->add_option("--d-opt-for-params", o.scaling.d_opt_for_params,
                        "Compute-optimal data for N parameters");
  a.scaling->add_option("--n-opt-for-data", o.scaling.n_opt_for_data,
                        "Compute-optimal parameters for D unique data");
  a.scaling->add_flag("--audit", o.scaling.audit, "Compare U_D with U_D / 2 at equal N");
  a.scaling->add_option("--manifest", o.scaling.manifest, "Write a run manifest here");
  return a;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           std::optional<std::uint64_t> from_config = std::nullopt) {
  if (flag) {
    return *flag;
  }
  if (from_config) {
    return *from_config;
  }
  if (const char* env = std::getenv("GFOLDS_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("GFOLDS_SEED is not an unsigned integer: '" + std::string(s) + "'");
    }
    return v;
  }
  return 0;
}

KeyValueConfig with_prefix_stripped(const KeyValueConfig& kv, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : kv.entries()) {
    if (k.starts_with(prefix)) {
      out.set(k.substr(prefix.size()), v);
    }
  }
  return out;
}

void merge_prefixed(std::map<std::string, std::string>& into, const KeyValueConfig& kv,
                    const std::string& prefix) {
  for (const auto& [k, v] : kv.entries()) {
    into[prefix + k] = v;
  }
}

// Rejects keys outside model.* / train.* and unknown keys within them.
void check_model_train_keys(const KeyValueConfig& kv, bool allow_train) {
  for (const auto& [k, v] : kv.entries()) {
    if (!k.starts_with("model.") && !(allow_train && k.starts_with("train."))) {
      throw ConfigError("config: unexpected key '" + k + "'");
    }
  }
  with_prefix_stripped(kv, "model.").check_known(ModelConfig::kv_keys());
  if (allow_train) {
    with_prefix_stripped(kv, "train.").check_known(TrainConfig::kv_keys());
  }
}

KeyValueConfig load_or_empty(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

void set_size_checked(KeyValueConfig& kv, const std::string& key, std::size_t value) {
  if (kv.has(key) && kv.get_size(key) != value) {
    throw ConfigError("config: " + key + " = " + kv.get_string(key) +
                      " does not match the vocabulary (" + std::to_string(value) + ")");
  }
  kv.set(key, std::to_string(value));
}

void print(std::ostream& out, const Json& j) { out << j.dump(2) << '\n'; }

fs::path manifest_beside(const fs::path& output) {
  return fs::path(output.string() + ".manifest.json");
}

// ---------------------------------------------------------------- synth

const std::vector<std::string_view>& synth_keys() {
  static const std::vector<std::string_view> keys = {
      "num_graphs",   "n_nouns",         "n_verbs",          "n_adjectives",
      "n_prepositions", "n_topics",      "tenses",           "min_nodes",
      "max_nodes",    "min_edge_density", "max_edge_density", "oov_rate",
      "off_topic_rate", "seed"};
  return keys;
}

SynthConfig synth_from_kv(const KeyValueConfig& kv) {
  kv.check_known(synth_keys());
  SynthConfig c;
  c.num_graphs = kv.get_size("num_graphs", c.num_graphs);
  c.n_nouns = kv.get_size("n_nouns", c.n_nouns);
  c.n_verbs = kv.get_size("n_verbs", c.n_verbs);
  c.n_adjectives = kv.get_size("n_adjectives", c.n_adjectives);
  c.n_prepositions = kv.get_size("n_prepositions", c.n_prepositions);
  c.n_topics = kv.get_size("n_topics", c.n_topics);
  if (kv.has("tenses")) {
    c.tenses = kv.get_list("tenses");
  }
  c.min_nodes = kv.get_size("min_nodes", c.min_nodes);
  c.max_nodes = kv.get_size("max_nodes", c.max_nodes);
  c.min_edge_density = kv.get_double("min_edge_density", c.min_edge_density);
  c.max_edge_density = kv.get_double("max_edge_density", c.max_edge_density);
  c.oov_rate = kv.get_double("oov_rate", c.oov_rate);
  c.off_topic_rate = kv.get_double("off_topic_rate", c.off_topic_rate);
  return c;
}

KeyValueConfig synth_to_kv(const SynthConfig& c) {
  KeyValueConfig kv;
  kv.set("num_graphs", std::to_string(c.num_graphs));
  kv.set("n_nouns", std::to_string(c.n_nouns));
  kv.set("n_verbs", std::to_string(c.n_verbs));
  kv.set("n_adjectives", std::to_string(c.n_adjectives));
  kv.set("n_prepositions", std::to_string(c.n_prepositions));
  kv.set("n_topics", std::to_string(c.n_topics));
  std::string tenses;
  for (const auto& t : c.tenses) {
    tenses += (tenses.empty() ? "" : ",") + t;
  }
  kv.set("tenses", tenses);
  kv.set("min_nodes", std::to_string(c.min_nodes));
  kv.set("max_nodes", std::to_string(c.max_nodes));
  kv.set("min_edge_density", format_double(c.min_edge_density));
  kv.set("max_edge_density", format_double(c.max_edge_density));
  kv.set("oov_rate", format_double(c.oov_rate));
  kv.set("off_topic_rate", format_double(c.off_topic_rate));
  return kv;
}

int cmd_synth(const SynthOptions& o, RunManifest& manifest, std::ostream& out) {
  const auto kv = load_or_empty(o.config);
  auto config = synth_from_kv(kv);
  if (o.num_graphs) {
    config.num_graphs = *o.num_graphs;
  }
  config.validate();
  std::optional<std::uint64_t> cfg_seed;
  if (kv.has("seed")) {
    cfg_seed = kv.get_size("seed");
  }
  const auto seed = resolve_seed(o.seed, cfg_seed);
  if (!o.config.empty()) {
    manifest.add_input(o.config);
  }
  const auto graphs = generate_synthetic_corpus(config, seed);
  write_raw_jsonl(fs::path(o.out), graphs);

  std::size_t nodes = 0;
  std::size_t edges = 0;
  for (const auto& g : graphs) {
    nodes += g.nodes.size();
    edges += g.edges.size();
  }
  auto resolved = synth_to_kv(config).entries();
  manifest.set_config(resolved);
  manifest.set_seed(seed);
  manifest.add_output(o.out);
  manifest.write(manifest_beside(o.out));

  Json j;
  j["command"] = "synth";
  j["output"] = o.out;
  j["sha1"] = git_blob_sha1(o.out);
  j["seed"] = seed;
  j["graphs"] = graphs.size();
  j["nodes"] = nodes;
  j["edges"] = edges;
  print(out, j);
  return kExitOk;
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(const PreprocessOptions& o, RunManifest& manifest, std::ostream& out) {
  if (o.vocab.empty() == o.vocab_out.empty()) {
    throw ConfigError("preprocess: give exactly one of --vocab and --vocab-out");
  }
  manifest.add_input(o.in);
  const auto raw = read_raw_jsonl(fs::path(o.in));
  Vocabulary vocab;
  if (!o.vocab.empty()) {
    manifest.add_input(o.vocab);
    vocab = Vocabulary::load(o.vocab);
  } else {
    vocab = build_vocabulary(raw);
    vocab.save(o.vocab_out);
    manifest.add_output(o.vocab_out);
  }
  std::vector<GraphDoc> docs;
  docs.reserve(raw.size());
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t masked = 0;
  for (const auto& g : raw) {
    try {
      docs.push_back(preprocess(g, vocab));
    } catch (const PreprocessError& e) {
      throw PreprocessError("graph '" + g.id + "': " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("graph '" + g.id + "': " + e.what());
    }
    nodes += docs.back().nodes.size();
    edges += docs.back().edges.size();
    masked += static_cast<std::size_t>(std::count_if(
        docs.back().nodes.begin(), docs.back().nodes.end(),
        [](const GraphNode& n) { return n.label == Vocabulary::kMask; }));
  }
  write_doc_jsonl(fs::path(o.out), docs, vocab);
  manifest.add_output(o.out);
  manifest.write(manifest_beside(o.out));

  Json j;
  j["command"] = "preprocess";
  j["output"] = o.out;
  j["graphs"] = docs.size();
  j["nodes"] = nodes;
  j["edges"] = edges;
  j["masked_nodes"] = masked;
  j["vocab_size"] = vocab.size();
  j["features"] = vocab.num_features();
  print(out, j);
  return kExitOk;
}

// ---------------------------------------------------------------- models

struct LoadedModel {
  GfoldsModel<float> model;
  TrainConfig train;
  std::size_t position = 0;
};

LoadedModel load_model(const fs::path& path, const Vocabulary& vocab) {
  auto ck = load_checkpoint(path);
  if (ck.model.vocab_size != vocab.size() || ck.model.n_features != vocab.num_features()) {
    throw ConfigError("checkpoint " + path.string() + " expects " +
                      std::to_string(ck.model.vocab_size) + " tokens and " +
                      std::to_string(ck.model.n_features) + " features; the vocabulary has " +
                      std::to_string(vocab.size()) + " and " +
                      std::to_string(vocab.num_features()));
  }
  return {GfoldsModel<float>(ck.model, std::move(ck.params)), ck.train, ck.position};
}

// ---------------------------------------------------------------- pretrain

int cmd_pretrain(const PretrainOptions& o, RunManifest& manifest, std::ostream& out) {
  auto kv = load_or_empty(o.config);
  check_model_train_keys(kv, true);
  manifest.add_input(o.corpus);
  manifest.add_input(o.vocab);
  if (!o.config.empty()) {
    manifest.add_input(o.config);
  }
  // A resumed run starts from the checkpoint's configuration; the file and
  // flags may still override keys (the trainer rejects model changes).
  std::optional<Checkpoint> resume;
  if (!o.resume.empty()) {
    manifest.add_input(o.resume);
    resume = load_checkpoint(o.resume);
  }
  const auto vocab = Vocabulary::load(o.vocab);
  auto model_kv = resume ? resume->model.to_kv() : KeyValueConfig{};
  const auto file_model = with_prefix_stripped(kv, "model.");
  for (const auto& [k, v] : file_model.entries()) {
    model_kv.set(k, v);
  }
  set_size_checked(model_kv, "vocab_size", vocab.size());
  set_size_checked(model_kv, "n_features", vocab.num_features());
  const auto model_config = ModelConfig::from_kv(model_kv);

  auto train_kv = resume ? resume->train.to_kv() : KeyValueConfig{};
  const auto file_train = with_prefix_stripped(kv, "train.");
  for (const auto& [k, v] : file_train.entries()) {
    train_kv.set(k, v);
  }
  std::optional<std::uint64_t> cfg_seed;
  if (train_kv.has("seed")) {
    cfg_seed = train_kv.get_size("seed");
  }
  train_kv.set("seed", std::to_string(resolve_seed(o.seed, cfg_seed)));
  if (o.epochs) {
    train_kv.set("epochs", std::to_string(*o.epochs));
  }
  if (o.batch_size) {
    train_kv.set("batch_size", std::to_string(*o.batch_size));
  }
  if (o.eval_every) {
    train_kv.set("snapshots_per_epoch", std::to_string(*o.eval_every));
  }
  if (o.checkpoint_every) {
    train_kv.set("checkpoint_every", std::to_string(*o.checkpoint_every));
  }
  const auto train_config = TrainConfig::from_kv(train_kv);

  const auto corpus = read_doc_jsonl(fs::path(o.corpus), vocab);
  fs::create_directories(o.out_dir);

  GfoldsModel<float> model(model_config, train_config.seed);
  Pretrainer trainer(model, train_config, corpus);
  trainer.set_checkpoint_dir(o.out_dir);
  if (resume) {
    trainer.resume(*resume);
  }
  trainer.set_step_callback([&](const TraceRow& row) {
    if (row.step % 50 == 0) {
      log_info("step " + std::to_string(row.step) + " lr " + format_double(row.lr) + " loss " +
               format_double(row.loss));
    }
  });
  const auto rows = trainer.run(o.max_steps);

  const fs::path final_path = fs::path(o.out_dir) / "final.gfld";
  trainer.save(final_path);
  const fs::path trace_path = fs::path(o.out_dir) / "trace.csv";
  write_trace_csv(trace_path, trainer.trace());
  const auto eval = evaluate_mnm(model, corpus, train_config, train_config.seed);

  std::map<std::string, std::string> resolved;
  merge_prefixed(resolved, model_config.to_kv(), "model.");
  merge_prefixed(resolved, train_config.to_kv(), "train.");
  manifest.set_config(resolved);
  manifest.set_seed(train_config.seed);
  for (const auto& ck : trainer.checkpoints()) {
    manifest.add_output(ck);
    manifest.add_output(checkpoint_sidecar(ck));
  }
  manifest.add_output(final_path);
  manifest.add_output(checkpoint_sidecar(final_path));
  manifest.add_output(trace_path);
  manifest.write(fs::path(o.out_dir) / "manifest.json");

  Json j;
  j["command"] = "pretrain";
  j["model"] = final_path.string();
  j["trace"] = trace_path.string();
  j["parameters"] = model.params().num_elements();
  j["steps"] = trainer.position();
  j["total_steps"] = trainer.total_steps();
  j["steps_this_run"] = rows.size();
  j["skipped_batches"] = trainer.skipped_batches();
  j["skipped_graphs"] = trainer.skipped_graphs();
  j["final_loss"] = trainer.trace().empty() ? Json(nullptr) : Json(trainer.trace().back().loss);
  j["mnm_eval"] = {{"loss", eval.loss}, {"accuracy", eval.accuracy}, {"targets", eval.targets}};
  j["checkpoints"] = Json::array();
  for (const auto& ck : trainer.checkpoints()) {
    j["checkpoints"].push_back(ck.string());
  }
  print(out, j);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

void finish_eval(const EvalOptions& o, RunManifest& manifest, const MetricReport& report,
                 std::ostream& out) {
  out << metric_json(report) << '\n';
  if (!o.manifest.empty()) {
    manifest.write(o.manifest);
  }
}

int cmd_eval_map(const EvalOptions& o, RunManifest& manifest, std::ostream& out) {
  const auto vocab = Vocabulary::load(o.vocab);
  const auto loaded = load_model(o.model, vocab);
  const auto data = read_retrieval_jsonl(o.data, vocab);
  RankOptions options;
  options.renormalize = !o.raw_logits;
  const auto result = map_score(loaded.model, data, options);
  manifest.set_config({{"renormalize", options.renormalize ? "true" : "false"}});
  finish_eval(o, manifest, {"map", result.map, data.terms.size(), result.per_term}, out);
  return kExitOk;
}

int cmd_eval_precision(const EvalOptions& o, RunManifest& manifest, std::ostream& out) {
  const auto vocab = Vocabulary::load(o.vocab);
  const auto loaded = load_model(o.model, vocab);
  const auto data = read_class_jsonl(o.data, vocab);
  if (data.empty()) {
    throw EmptyBatchError("eval precision: no instances in " + o.data);
  }
  std::vector<double> per_item;
  for (const auto& item : data) {
    per_item.push_back(precision_at_k(loaded.model, item.instance,
                                      class_by_name(vocab, item.class_name), o.k));
  }
  manifest.set_config({{"k", std::to_string(o.k)}});
  finish_eval(o, manifest, {"precision_at_k", mean_of(per_item), per_item.size(), per_item},
              out);
  return kExitOk;
}

int cmd_eval_veridicality(const EvalOptions& o, RunManifest& manifest, std::ostream& out) {
  const auto vocab = Vocabulary::load(o.vocab);
  const auto loaded = load_model(o.model, vocab);
  if (!loaded.model.has_classifier()) {
    throw ConfigError("eval veridicality: " + o.model + " has no classifier head");
  }
  const auto data = read_labeled_jsonl(o.data, vocab);
  if (data.empty()) {
    throw EmptyBatchError("eval veridicality: no instances in " + o.data);
  }
  const auto predicted = predict_classes(loaded.model, data, o.batch_size);
  std::vector<double> per_item;
  for (std::size_t i = 0; i < data.size(); ++i) {
    per_item.push_back(predicted[i] == data[i].label ? 1.0 : 0.0);
  }
  manifest.set_config({{"batch_size", std::to_string(o.batch_size)}});
  finish_eval(o, manifest, {"accuracy", mean_of(per_item), per_item.size(), per_item}, out);
  return kExitOk;
}

// ---------------------------------------------------------------- finetune

int cmd_finetune(const FinetuneOptions& o, RunManifest& manifest, std::ostream& out) {
  auto kv = load_or_empty(o.config);
  kv.check_known(FinetuneConfig::kv_keys());
  std::optional<std::uint64_t> cfg_seed;
  if (kv.has("seed")) {
    cfg_seed = kv.get_size("seed");
  }
  kv.set("seed", std::to_string(resolve_seed(o.seed, cfg_seed)));
  if (o.epochs) {
    kv.set("epochs", std::to_string(*o.epochs));
  }
  if (o.lr) {
    kv.set("lr", format_double(*o.lr));
  }
  if (o.weight_decay) {
    kv.set("weight_decay", format_double(*o.weight_decay));
  }
  if (o.batch_size) {
    kv.set("batch_size", std::to_string(*o.batch_size));
  }
  if (o.num_classes) {
    kv.set("num_classes", std::to_string(*o.num_classes));
  }
  if (o.freeze_encoder) {
    kv.set("freeze_encoder", "true");
  }
  const auto config = FinetuneConfig::from_kv(kv);

  for (const auto& p : {o.model, o.vocab, o.train, o.test}) {
    manifest.add_input(p);
  }
  if (!o.config.empty()) {
    manifest.add_input(o.config);
  }
  const auto vocab = Vocabulary::load(o.vocab);
  auto loaded = load_model(o.model, vocab);
  const auto train = read_labeled_jsonl(o.train, vocab);
  const auto test = read_labeled_jsonl(o.test, vocab);
  const auto report = finetune_classifier(loaded.model, train, test, config);

  save_checkpoint(o.out, loaded.model, AdamW<float>{}, loaded.train, loaded.position);
  manifest.set_config(config.to_kv().entries());
  manifest.set_seed(config.seed);
  manifest.add_output(o.out);
  manifest.add_output(checkpoint_sidecar(o.out));
  manifest.write(manifest_beside(o.out));

  Json j;
  j["command"] = "finetune";
  j["output"] = o.out;
  j["epoch_loss"] = report.epoch_loss;
  j["train_accuracy"] = report.train_accuracy;
  j["test_accuracy"] = report.test_accuracy;
  j["class_counts"] = report.class_counts;
  j["degenerate"] = report.degenerate;
  print(out, j);
  return kExitOk;
}

// ---------------------------------------------------------------- count-params

int cmd_count(const CountOptions& o, RunManifest& manifest, std::ostream& out) {
  auto kv = load_or_empty(o.config);
  check_model_train_keys(kv, true);
  auto model_kv = o.paper ? ModelConfig::paper().to_kv() : KeyValueConfig{};
  const auto file_model = with_prefix_stripped(kv, "model.");
  for (const auto& [k, v] : file_model.entries()) {
    model_kv.set(k, v);
  }
  if (!o.vocab.empty()) {
    const auto vocab = Vocabulary::load(o.vocab);
    model_kv.set("vocab_size", std::to_string(vocab.size()));
    model_kv.set("n_features", std::to_string(vocab.num_features()));
    manifest.add_input(o.vocab);
  }
  if (o.vocab_size) {
    model_kv.set("vocab_size", std::to_string(*o.vocab_size));
  }
  if (o.n_features) {
    model_kv.set("n_features", std::to_string(*o.n_features));
  }
  const auto config = ModelConfig::from_kv(model_kv);
  if (!o.config.empty()) {
    manifest.add_input(o.config);
  }
  const auto count = count_parameters(config, o.num_classes);

  Json j;
  j["command"] = "count-params";
  j["total"] = count.total;
  j["groups"] = Json::array();
  for (const auto& g : count.groups) {
    j["groups"].push_back({{"name", g.name}, {"count", g.count}});
  }
  j["per_edge_label"] = count.per_edge_label;
  j["edge_labels"] = config.edge_labels.size();
  j["config"] = Json::object();
  const auto config_kv = config.to_kv();
  for (const auto& [k, v] : config_kv.entries()) {
    j["config"][k] = v;
  }
  print(out, j);
  if (!o.manifest.empty()) {
    std::map<std::string, std::string> resolved;
    merge_prefixed(resolved, config.to_kv(), "model.");
    manifest.set_config(resolved);
    manifest.write(o.manifest);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- scaling

const std::vector<std::string_view>& fit_keys() {
  static const std::vector<std::string_view> keys = {"E",    "A",        "B",       "alpha",
                                                     "beta", "R_star_D", "R_star_N"};
  return keys;
}

int cmd_scaling(const ScalingOptions& o, RunManifest& manifest, std::ostream& out) {
  using namespace scaling;
  UniqueLawParams unique = kChinchilla;
  RepeatedLawParams repeated = kMuennighoff;
  if (!o.fit.empty()) {
    // A custom fit replaces both laws; the frontier follows its E..beta.
    const auto kv = KeyValueConfig::load(o.fit);
    kv.check_known(fit_keys());
    repeated.E = kv.get_double("E", repeated.E);
    repeated.A = kv.get_double("A", repeated.A);
    repeated.B = kv.get_double("B", repeated.B);
    repeated.alpha = kv.get_double("alpha", repeated.alpha);
    repeated.beta = kv.get_double("beta", repeated.beta);
    repeated.R_star_D = kv.get_double("R_star_D", repeated.R_star_D);
    repeated.R_star_N = kv.get_double("R_star_N", repeated.R_star_N);
    unique = repeated.as_unique();
    manifest.add_input(o.fit);
  }
  unique.validate();
  repeated.validate();

  Json j;
  j["command"] = "scaling";
  j["unique_law"] = {{"E", unique.E}, {"A", unique.A}, {"B", unique.B},
                     {"alpha", unique.alpha}, {"beta", unique.beta}};
  j["repeated_law"] = {{"E", repeated.E},         {"A", repeated.A},
                       {"B", repeated.B},         {"alpha", repeated.alpha},
                       {"beta", repeated.beta},   {"R_star_D", repeated.R_star_D},
                       {"R_star_N", repeated.R_star_N}};

  std::optional<double> n = o.params;
  if (!o.model_config.empty()) {
    if (n) {
      throw ConfigError("scaling: give --params or --model-config, not both");
    }
    const auto kv = KeyValueConfig::load(o.model_config);
    check_model_train_keys(kv, true);
    n = static_cast<double>(
        count_parameters(ModelConfig::from_kv(with_prefix_stripped(kv, "model."))).total);
    manifest.add_input(o.model_config);
  }

  std::optional<double> ud = o.unique_data;
  if (!o.corpus.empty()) {
    if (ud) {
      throw ConfigError("scaling: give --unique-data or --corpus, not both");
    }
    if (o.vocab.empty()) {
      throw ConfigError("scaling: --corpus needs --vocab");
    }
    const auto vocab = Vocabulary::load(o.vocab);
    const auto docs = read_doc_jsonl(fs::path(o.corpus), vocab);
    std::size_t nodes = 0;
    std::size_t edges = 0;
    for (const auto& d : docs) {
      nodes += d.nodes.size();
      edges += d.edges.size();
    }
    j["unique_data"] = {{"nodes", nodes},
                        {"nodes+edges", nodes + edges},
                        {"graphs", docs.size()},
                        {"unit", o.unit}};
    ud = o.unit == "graphs"        ? static_cast<double>(docs.size())
         : o.unit == "nodes+edges" ? static_cast<double>(nodes + edges)
                                   : static_cast<double>(nodes);
    manifest.add_input(o.corpus);
    manifest.add_input(o.vocab);
  }

  if (o.d_opt_for_params) {
    j["d_opt_for_params"] = {{"N", *o.d_opt_for_params},
                             {"D_opt", d_opt_for_params(*o.d_opt_for_params, unique)}};
  }
  if (o.n_opt_for_data) {
    j["n_opt_for_data"] = {{"D", *o.n_opt_for_data},
                           {"N_opt", n_opt_for_data(*o.n_opt_for_data, unique)}};
  }
  if (o.compute) {
    const auto opt = compute_optimal(*o.compute, unique);
    j["compute_optimal"] = {{"C", *o.compute},
                            {"N_opt", opt.n_opt},
                            {"D_opt", opt.d_opt},
                            {"loss", loss_unique(opt.n_opt, opt.d_opt, unique)}};
  }
  if (n && ud) {
    const auto t = repeated_terms(*n, *ud, o.epochs, repeated, unique);
    j["N"] = *n;
    j["D"] = *ud;
    j["epochs"] = o.epochs;
    j["C"] = flops(*n, *ud * o.epochs);
    j["loss_unique"] = loss_unique(*n, *ud * o.epochs, unique);
    j["loss_repeated"] = t.loss;
    j["branch"] = branch_name(t.branch);
    j["d_hat"] = t.d_hat;
    j["n_hat"] = t.n_hat;
    j["n_opt"] = t.n_opt;
    if (o.audit) {
      const auto a = data_halving_audit(*n, *ud, o.epochs, repeated, unique);
      auto terms = [](const RepeatedTerms& r) {
        return Json{{"branch", branch_name(r.branch)}, {"n_opt", r.n_opt},
                    {"n_hat", r.n_hat},                {"d_hat", r.d_hat},
                    {"param_term", r.param_term},      {"data_term", r.data_term},
                    {"loss", r.loss}};
      };
      j["audit"] = {{"full", terms(a.full)},
                    {"half", terms(a.half)},
                    {"d_hat_ratio", a.d_hat_ratio},
                    {"data_term_ratio", a.data_term_ratio},
                    {"half_bernoulli_gap", a.half_bernoulli_gap},
                    {"consistent_with_equal_loss", a.consistent_with_equal_loss},
                    {"verdict", a.verdict}};
    }
  } else if (o.audit) {
    throw ConfigError("scaling: --audit needs N and U_D");
  } else if (!o.d_opt_for_params && !o.n_opt_for_data && !o.compute) {
    throw ConfigError(
        "scaling: nothing to compute; give N and U_D, --compute, --d-opt-for-params or "
        "--n-opt-for-data");
  }
  print(out, j);
  if (!o.manifest.empty()) {
    manifest.write(o.manifest);
  }
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  switch (error_category(e)) {
    case ErrorCategory::kConfig:
      return kExitConfig;
    case ErrorCategory::kData:
      return kExitData;
    case ErrorCategory::kNumerical:
      return kExitNumerical;
    case ErrorCategory::kOther:
      break;
  }
  if (dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) {
    return kExitData;
  }
  return kExitOther;
}

void collect_options(const CLI::App& app, const std::string& path,
                     std::vector<OptionInfo>& out) {
  for (const auto* opt : app.get_options()) {
    out.push_back({path, opt->get_name(), opt->get_description()});
  }
  for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    const std::string sub_path = path.empty() ? sub->get_name() : path + " " + sub->get_name();
    out.push_back({sub_path, "", sub->get_description()});
    collect_options(*sub, sub_path, out);
  }
}

}  // namespace

std::vector<OptionInfo> option_inventory() {
  CLI::App app("gfolds");
  Options o;
  build(app, o);
  std::vector<OptionInfo> out;
  collect_options(app, "", out);
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Graph-based foundation model over DMRS semantic graphs", "gfolds");
  Options o;
  const Apps apps = build(app, o);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const auto previous_level = log_level();
  if (o.verbose) {
    set_log_level(LogLevel::kInfo);
  }
  int code = kExitOther;
  try {
    std::string name;
    for (const auto* sub : app.get_subcommands()) {
      name = sub->get_name();
      for (const auto* inner : sub->get_subcommands()) {
        name += " " + inner->get_name();
      }
    }
    RunManifest manifest(name, args);
    if (apps.synth->parsed()) {
      code = cmd_synth(o.synth, manifest, out);
    } else if (apps.preprocess->parsed()) {
      code = cmd_preprocess(o.preprocess, manifest, out);
    } else if (apps.pretrain->parsed()) {
      code = cmd_pretrain(o.pretrain, manifest, out);
    } else if (apps.eval_map->parsed()) {
      code = cmd_eval_map(o.eval, manifest, out);
    } else if (apps.eval_precision->parsed()) {
      code = cmd_eval_precision(o.eval, manifest, out);
    } else if (apps.eval_veridicality->parsed()) {
      code = cmd_eval_veridicality(o.eval, manifest, out);
    } else if (apps.finetune->parsed()) {
      code = cmd_finetune(o.finetune, manifest, out);
    } else if (apps.count->parsed()) {
      code = cmd_count(o.count, manifest, out);
    } else if (apps.scaling->parsed()) {
      code = cmd_scaling(o.scaling, manifest, out);
    }
  } catch (const std::exception& e) {
    err << "gfolds: " << e.what() << '\n';
    code = exit_code_for(e);
  }
  set_log_level(previous_level);
  return code;
}

}  // namespace gfolds::cli
