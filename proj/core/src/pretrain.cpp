// SPDX-License-Identifier: Apache-2.0
#include "gfolds/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "gfolds/errors.hpp"
#include "gfolds/log.hpp"
#include "gfolds/ops.hpp"
#include "gfolds/vocab.hpp"

namespace gfolds {

namespace {

constexpr std::string_view kMomentM = "optim.m.";
constexpr std::string_view kMomentV = "optim.v.";
constexpr int kCheckpointVersion = 1;

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.rfind(prefix, 0) == 0;
}

KeyValueConfig with_prefix(const KeyValueConfig& kv, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : kv.entries()) {
    out.set(prefix + k, v);
  }
  return out;
}

KeyValueConfig strip_prefix(const KeyValueConfig& kv, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : kv.entries()) {
    if (starts_with(k, prefix)) {
      out.set(k.substr(prefix.size()), v);
    }
  }
  return out;
}

}  // namespace

std::vector<LrKnot> TrainConfig::default_lr_knots() {
  return {{0.0, 1e-5}, {1.0, 2e-5}, {2.0, 1e-5}, {3.0, 3e-6}, {4.0, 1e-6}};
}

void TrainConfig::validate() const {
  if (batch_size == 0) {
    throw ConfigError("train config: batch_size must be positive");
  }
  if (epochs == 0) {
    throw ConfigError("train config: epochs must be positive");
  }
  if (!(selection_prob >= 0.0 && selection_prob <= 1.0)) {
    throw ConfigError("train config: selection_prob must lie in [0, 1]");
  }
  if (!(mask_rate_of_selected >= 0.0 && mask_rate_of_selected <= 1.0)) {
    throw ConfigError("train config: mask_rate_of_selected must lie in [0, 1]");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("train config: weight_decay must be non-negative");
  }
  if (lr_knots.empty()) {
    throw ConfigError("train config: lr_knots is empty");
  }
  for (std::size_t i = 0; i < lr_knots.size(); ++i) {
    if (!(lr_knots[i].lr > 0.0) || !std::isfinite(lr_knots[i].lr)) {
      throw ConfigError("train config: learn rate at knot " + std::to_string(i) +
                        " must be positive");
    }
    if (!std::isfinite(lr_knots[i].epoch) ||
        (i > 0 && !(lr_knots[i].epoch > lr_knots[i - 1].epoch))) {
      throw ConfigError("train config: lr_knots must be strictly increasing in epoch");
    }
  }
}

const std::vector<std::string_view>& TrainConfig::kv_keys() {
  static const std::vector<std::string_view> keys = {
      "batch_size",   "epochs",           "selection_prob",      "mask_rate_of_selected",
      "lr_knots",     "weight_decay",     "seed",                "checkpoint_every",
      "snapshots_per_epoch", "max_nodes"};
  return keys;
}

KeyValueConfig TrainConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("selection_prob", format_double(selection_prob));
  kv.set("mask_rate_of_selected", format_double(mask_rate_of_selected));
  std::string knots;
  for (const auto& k : lr_knots) {
    knots += (knots.empty() ? "" : ",") + format_double(k.epoch) + ":" + format_double(k.lr);
  }
  kv.set("lr_knots", knots);
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("seed", std::to_string(seed));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("snapshots_per_epoch", std::to_string(snapshots_per_epoch));
  kv.set("max_nodes", std::to_string(max_nodes));
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
  TrainConfig c;
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.epochs = kv.get_size("epochs", c.epochs);
  c.selection_prob = kv.get_double("selection_prob", c.selection_prob);
  c.mask_rate_of_selected = kv.get_double("mask_rate_of_selected", c.mask_rate_of_selected);
  if (kv.has("lr_knots")) {
    c.lr_knots.clear();
    for (const auto& item : kv.get_list("lr_knots")) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError("train config: lr_knots entry '" + item + "' is not epoch:lr");
      }
      KeyValueConfig one;
      one.set("epoch", item.substr(0, colon));
      one.set("lr", item.substr(colon + 1));
      c.lr_knots.push_back({one.get_double("epoch"), one.get_double("lr")});
    }
  }
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.seed = static_cast<std::uint64_t>(kv.get_size("seed", c.seed));
  c.checkpoint_every = kv.get_size("checkpoint_every", c.checkpoint_every);
  c.snapshots_per_epoch = kv.get_size("snapshots_per_epoch", c.snapshots_per_epoch);
  c.max_nodes = kv.get_size("max_nodes", c.max_nodes);
  c.validate();
  return c;
}

double lr_at_epoch(double epoch, std::span<const LrKnot> knots) {
  if (knots.empty()) {
    throw ConfigError("lr_at: no knots");
  }
  if (epoch <= knots.front().epoch) {
    return knots.front().lr;
  }
  if (epoch >= knots.back().epoch) {
    return knots.back().lr;
  }
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const auto& a = knots[i];
    const auto& b = knots[i + 1];
    if (epoch == a.epoch) {
      return a.lr;
    }
    if (epoch == b.epoch) {
      return b.lr;
    }
    if (epoch > a.epoch && epoch < b.epoch) {
      const double t = (epoch - a.epoch) / (b.epoch - a.epoch);
      return a.lr + t * (b.lr - a.lr);
    }
  }
  return knots.back().lr;
}

double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& config) {
  if (steps_per_epoch == 0) {
    throw ConfigError("lr_at: steps_per_epoch must be positive");
  }
  return lr_at_epoch(static_cast<double>(step) / static_cast<double>(steps_per_epoch),
                     config.lr_knots);
}

std::vector<std::int32_t> MaskedBatch::target_rows() const {
  std::vector<std::int32_t> rows;
  rows.reserve(targets.size());
  for (const auto& t : targets) {
    rows.push_back(static_cast<std::int32_t>(batch.row(t.graph, t.node)));
  }
  return rows;
}

std::vector<std::int32_t> MaskedBatch::target_tokens() const {
  std::vector<std::int32_t> tokens;
  tokens.reserve(targets.size());
  for (const auto& t : targets) {
    tokens.push_back(t.token);
  }
  return tokens;
}

MaskedBatch select_and_mask(std::span<const GraphDoc> graphs, const TrainConfig& config, Rng& rng) {
  MaskedBatch out;
  out.graphs.assign(graphs.begin(), graphs.end());
  for (std::size_t g = 0; g < out.graphs.size(); ++g) {
    auto& nodes = out.graphs[g].nodes;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (Vocabulary::is_reserved(nodes[i].label)) {
        continue;
      }
      ++out.maskable;
      if (!rng.bernoulli(config.selection_prob)) {
        continue;
      }
      out.targets.push_back({g, i, nodes[i].label});
      if (config.mask_rate_of_selected >= 1.0 || rng.bernoulli(config.mask_rate_of_selected)) {
        nodes[i].label = Vocabulary::kMask;
      }
    }
  }
  if (!out.graphs.empty()) {
    out.batch = make_batch(out.graphs);
  }
  return out;
}

MnmOutput mnm_loss(const GfoldsModel<float>& model, const MaskedBatch& masked,
                   const ForwardOptions& options) {
  if (!masked.has_targets()) {
    throw EmptyBatchError("mnm_loss: batch has no targets");
  }
  const auto h = model.encode(masked.batch, options);
  const auto rows = masked.target_rows();
  const auto tokens = masked.target_tokens();
  MnmOutput out;
  out.logits = model.mnm_logits(ops::embedding(h, std::span<const std::int32_t>(rows)));
  out.loss = ops::cross_entropy(out.logits, std::span<const std::int32_t>(tokens));
  return out;
}

MnmEval evaluate_mnm(const GfoldsModel<float>& model, std::span<const GraphDoc> corpus,
                     const TrainConfig& config, std::uint64_t seed) {
  NoGradGuard guard;
  MnmEval out;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const Rng root = Rng(seed).split("eval");
  for (std::size_t start = 0, b = 0; start < corpus.size(); start += config.batch_size, ++b) {
    const std::size_t n = std::min(config.batch_size, corpus.size() - start);
    Rng rng = root.split(b);
    const auto masked = select_and_mask(corpus.subspan(start, n), config, rng);
    if (!masked.has_targets()) {
      continue;
    }
    const auto res = mnm_loss(model, masked);
    const std::size_t k = masked.targets.size();
    const std::size_t v = res.logits.dim(1);
    loss_sum += static_cast<double>(res.loss.item()) * static_cast<double>(k);
    const auto logits = res.logits.data();
    for (std::size_t t = 0; t < k; ++t) {
      const auto row = logits.subspan(t * v, v);
      const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == masked.targets[t].token;
    }
    out.targets += k;
  }
  if (out.targets > 0) {
    out.loss = loss_sum / static_cast<double>(out.targets);
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.targets);
  }
  return out;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "step,epoch_fraction,lr,loss\n";
  for (const auto& r : trace) {
    out << r.step << ',' << format_double(r.epoch_fraction) << ',' << format_double(r.lr) << ','
        << format_double(r.loss) << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  write_trace_csv(out, trace);
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".cfg";
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const GfoldsModel<float>& model,
                     const AdamW<float>& optimizer, const TrainConfig& config,
                     std::size_t position) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    ContainerWriter writer(out);
    write_params(model.params(), writer);
    const auto& moments = optimizer.moments();
    for (const auto& name : model.params().names()) {
      const auto it = moments.find(name);
      if (it == moments.end()) {
        continue;
      }
      const auto& shape = model.params().get(name).shape();
      writer.write(std::string(kMomentM) + name, shape, it->second.m);
      writer.write(std::string(kMomentV) + name, shape, it->second.v);
    }
    if (!out) {
      throw std::runtime_error("failed writing checkpoint " + path.string());
    }
  }
  KeyValueConfig kv = with_prefix(model.config().to_kv(), "model.");
  const auto train_kv = with_prefix(config.to_kv(), "train.");
  for (const auto& [k, v] : train_kv.entries()) {
    kv.set(k, v);
  }
  kv.set("checkpoint_version", std::to_string(kCheckpointVersion));
  kv.set("state.position", std::to_string(position));
  kv.set("state.optimizer_step", std::to_string(optimizer.step_count()));
  kv.set("state.num_classes", std::to_string(model.num_classes()));
  kv.save(checkpoint_sidecar(path));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto sidecar = checkpoint_sidecar(path);
  if (!std::filesystem::exists(sidecar)) {
    throw ConfigError("checkpoint: missing config sidecar " + sidecar.string());
  }
  const auto kv = KeyValueConfig::load(sidecar);
  const auto version = kv.get_int("checkpoint_version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.model = ModelConfig::from_kv(strip_prefix(kv, "model."));
  ck.train = TrainConfig::from_kv(strip_prefix(kv, "train."));
  ck.position = kv.get_size("state.position");
  ck.optimizer_step = static_cast<std::uint64_t>(kv.get_size("state.optimizer_step"));

  std::unordered_map<std::string, std::vector<float>> m;
  std::unordered_map<std::string, std::vector<float>> v;
  for (auto& t : read_container(path)) {
    if (starts_with(t.name, kMomentM)) {
      m.emplace(t.name.substr(kMomentM.size()), std::move(t.data));
    } else if (starts_with(t.name, kMomentV)) {
      v.emplace(t.name.substr(kMomentV.size()), std::move(t.data));
    } else {
      ck.params.add(t.name, std::move(t.shape), std::move(t.data));
    }
  }
  for (auto& [name, mv] : m) {
    const auto it = v.find(name);
    if (it == v.end() || !ck.params.contains(name) ||
        ck.params.get(name).numel() != mv.size() || it->second.size() != mv.size()) {
      throw IntegrityError("checkpoint: optimizer moments for '" + name + "' are inconsistent");
    }
    ck.moments.emplace(name, AdamW<float>::Moments{std::move(mv), std::move(it->second)});
  }
  if (v.size() != ck.moments.size()) {
    throw IntegrityError("checkpoint: unpaired optimizer moments");
  }
  return ck;
}

Pretrainer::Pretrainer(GfoldsModel<float>& model, TrainConfig config,
                       std::span<const GraphDoc> corpus)
    : model_(model), config_(std::move(config)) {
  config_.validate();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return corpus[a].id < corpus[b].id; });
  for (std::size_t i : order) {
    if (config_.max_nodes > 0 && corpus[i].nodes.size() > config_.max_nodes) {
      ++oversized_;
      continue;
    }
    corpus_.push_back(corpus[i]);
  }
  if (oversized_ > 0) {
    log_warn("pretrain: skipped " + std::to_string(oversized_) + " graph(s) above " +
             std::to_string(config_.max_nodes) + " nodes");
  }
  if (corpus_.empty()) {
    throw EmptyBatchError("pretrain: corpus is empty");
  }
  AdamWConfig opt;
  opt.weight_decay = config_.weight_decay;
  optimizer_ = AdamW<float>(opt);
  steps_per_epoch_ = (corpus_.size() + config_.batch_size - 1) / config_.batch_size;
}

void Pretrainer::resume(const Checkpoint& checkpoint) {
  if (!(checkpoint.model == model_.config())) {
    const auto want = model_.config().to_kv().entries();
    const auto got = checkpoint.model.to_kv().entries();
    std::string diff;
    for (const auto& [k, val] : want) {
      const auto it = got.find(k);
      if (it == got.end() || it->second != val) {
        diff += (diff.empty() ? "" : ", ") + k;
      }
    }
    throw ConfigError("pretrain: checkpoint model config differs in: " + diff);
  }
  for (const auto& name : checkpoint.params.names()) {
    if (!model_.params().contains(name) ||
        model_.params().get(name).shape() != checkpoint.params.get(name).shape()) {
      throw ConfigError("pretrain: checkpoint tensor '" + name + "' does not fit the model");
    }
    const auto src = checkpoint.params.get(name).data();
    std::copy(src.begin(), src.end(), model_.params().get(name).mutable_data().begin());
  }
  optimizer_.restore(checkpoint.optimizer_step, checkpoint.moments);
  position_ = checkpoint.position;
}

std::vector<std::size_t> Pretrainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(corpus_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(config_.seed).split("shuffle").split(epoch);
  rng.shuffle(std::span(order));
  return order;
}

bool Pretrainer::is_snapshot(std::size_t position) const {
  if (config_.checkpoint_every > 0 && position % config_.checkpoint_every == 0) {
    return true;
  }
  if (config_.snapshots_per_epoch > 0) {
    const std::size_t within = position % steps_per_epoch_;
    const std::size_t k = config_.snapshots_per_epoch;
    for (std::size_t i = 1; i <= k; ++i) {
      if (within == (i * steps_per_epoch_ / k) % steps_per_epoch_) {
        return true;
      }
    }
  }
  return false;
}

void Pretrainer::save(const std::filesystem::path& path) const {
  save_checkpoint(path, model_, optimizer_, config_, position_);
}

std::vector<TraceRow> Pretrainer::run(std::size_t max_batches) {
  std::vector<TraceRow> produced;
  const std::size_t end =
      max_batches == 0 ? total_steps() : std::min(total_steps(), position_ + max_batches);
  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  while (position_ < end) {
    const std::size_t step = position_;
    const std::size_t epoch = step / steps_per_epoch_;
    if (epoch != order_epoch) {
      order = epoch_order(epoch);
      order_epoch = epoch;
    }
    const std::size_t start = (step % steps_per_epoch_) * config_.batch_size;
    const std::size_t n = std::min(config_.batch_size, corpus_.size() - start);
    std::vector<GraphDoc> graphs;
    graphs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      graphs.push_back(corpus_[order[start + i]]);
    }
    Rng mask_rng = Rng(config_.seed).split("mask").split(step);
    const auto masked = select_and_mask(graphs, config_, mask_rng);
    ++position_;
    if (!masked.has_targets()) {
      ++skipped_;
      log_info("pretrain: batch " + std::to_string(step) + " has no targets; skipped");
    } else {
      Rng drop_rng = Rng(config_.seed).split("dropout").split(step);
      ForwardOptions opts;
      opts.train = true;
      opts.rng = &drop_rng;
      model_.params().zero_grad();
      const auto out = mnm_loss(model_, masked, opts);
      const double loss = out.loss.item();
      if (!std::isfinite(loss)) {
        throw NumericalError("pretrain: non-finite loss at step " + std::to_string(step));
      }
      out.loss.backward();
      const double lr = lr_at(step, steps_per_epoch_, config_);
      optimizer_.step(model_.params(), lr);
      TraceRow row{step, static_cast<double>(step) / static_cast<double>(steps_per_epoch_), lr,
                   loss};
      trace_.push_back(row);
      produced.push_back(row);
      if (on_step_) {
        on_step_(row);
      }
    }
    if (!checkpoint_dir_.empty() && is_snapshot(position_)) {
      const auto path = checkpoint_dir_ / ("ckpt-" + std::to_string(position_) + ".gfld");
      save(path);
      written_.push_back(path);
    }
  }
  if (position_ == total_steps() && skipped_ == total_steps()) {
    log_warn("pretrain: every batch was skipped (no maskable targets)");
  }
  return produced;
}

}  // namespace gfolds
