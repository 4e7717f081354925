// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfolds/graph.hpp"
#include "gfolds/kv_config.hpp"
#include "gfolds/model.hpp"
#include "gfolds/optim.hpp"
#include "gfolds/rng.hpp"

namespace gfolds {

struct LrKnot {
  double epoch = 0.0;
  double lr = 0.0;
  bool operator==(const LrKnot&) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 4;
  double selection_prob = 0.2;
  double mask_rate_of_selected = 1.0;
  std::vector<LrKnot> lr_knots = default_lr_knots();
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  // Batches between checkpoints; 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;
  // Evenly spaced checkpoints per epoch in addition to the above; 0 disables.
  std::size_t snapshots_per_epoch = 0;
  // Graphs with more nodes are skipped with a warning; 0 means no cap.
  std::size_t max_nodes = 0;

  // (0, 1e-5), (1, 2e-5), (2, 1e-5), (3, 3e-6), (4, 1e-6) in epochs.
  static std::vector<LrKnot> default_lr_knots();

  // Throws ConfigError on probabilities outside [0, 1], unsorted or
  // non-positive knots, a zero batch size or zero epochs.
  void validate() const;

  // lr_knots is written as "epoch:lr,epoch:lr,...".
  KeyValueConfig to_kv() const;
  static TrainConfig from_kv(const KeyValueConfig& kv);
  static const std::vector<std::string_view>& kv_keys();

  bool operator==(const TrainConfig&) const = default;
};

// Piecewise-linear in epoch position step / steps_per_epoch; clamps to the
// first and last knot outside their range. Exact at knot positions.
double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& config);
double lr_at_epoch(double epoch, std::span<const LrKnot> knots);

struct MaskTarget {
  std::size_t graph = 0;
  std::size_t node = 0;
  TokenId token = 0;
};

struct MaskedBatch {
  std::vector<GraphDoc> graphs;  // selected labels replaced by [MASK]
  std::vector<MaskTarget> targets;
  std::size_t maskable = 0;  // nodes eligible for selection
  GraphBatch batch;

  bool has_targets() const noexcept { return !targets.empty(); }
  // Batch rows of the targets, in target order.
  std::vector<std::int32_t> target_rows() const;
  std::vector<std::int32_t> target_tokens() const;
};

// Each node whose label is not reserved ([PAD], [MASK], if_x_then) is
// selected with probability selection_prob; selected labels become [MASK]
// with probability mask_rate_of_selected (features stay). A result with no
// targets is a signal to skip the batch.
MaskedBatch select_and_mask(std::span<const GraphDoc> graphs, const TrainConfig& config, Rng& rng);

struct MnmOutput {
  Tensor loss;    // mean cross-entropy over targets
  Tensor logits;  // [targets, vocab_size]
};

// Requires at least one target (EmptyBatchError otherwise).
MnmOutput mnm_loss(const GfoldsModel<float>& model, const MaskedBatch& masked,
                   const ForwardOptions& options = {});

struct MnmEval {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t targets = 0;
};

// Masks `corpus` with a stream derived from `seed` and scores argmax
// recovery of the hidden labels. No gradients are recorded.
MnmEval evaluate_mnm(const GfoldsModel<float>& model, std::span<const GraphDoc> corpus,
                     const TrainConfig& config, std::uint64_t seed);

struct TraceRow {
  std::size_t step = 0;
  double epoch_fraction = 0.0;
  double lr = 0.0;
  double loss = 0.0;
  bool operator==(const TraceRow&) const = default;
};

// CSV with header "step,epoch_fraction,lr,loss"; doubles round-trip exactly.
void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace);
void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace);

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::size_t position = 0;  // batches consumed
  std::uint64_t optimizer_step = 0;
  ParamStore<float> params;
  std::unordered_map<std::string, AdamW<float>::Moments> moments;
};

// Writes `<path>` (tensor container holding parameters and optimizer
// moments) and `<path>.cfg` (key-value sidecar with both configs and the
// loop position).
void save_checkpoint(const std::filesystem::path& path, const GfoldsModel<float>& model,
                     const AdamW<float>& optimizer, const TrainConfig& config,
                     std::size_t position);
// Throws FormatError on a bad container, ConfigError on a missing or
// inconsistent sidecar.
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

// Masked-node pretraining loop. The corpus is put in a canonical order (by
// graph id) so that the input order does not matter; per-epoch shuffles and
// per-batch masks are drawn from streams derived from the seed, the epoch
// and the batch index, so a resumed run replays the same batches.
class Pretrainer {
 public:
  Pretrainer(GfoldsModel<float>& model, TrainConfig config, std::span<const GraphDoc> corpus);

  // Checkpoints land in `dir` as ckpt-<position>.gfld (+ .cfg).
  void set_checkpoint_dir(std::filesystem::path dir) { checkpoint_dir_ = std::move(dir); }
  void set_step_callback(std::function<void(const TraceRow&)> callback) {
    on_step_ = std::move(callback);
  }

  // Restores optimizer state and loop position; the model configuration
  // must match (ConfigError naming the differing keys otherwise).
  void resume(const Checkpoint& checkpoint);

  // Consumes up to `max_batches` batches (0 = to the end of training) and
  // returns the trace rows produced. Throws NumericalError on a non-finite
  // loss, naming the step.
  std::vector<TraceRow> run(std::size_t max_batches = 0);

  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::size_t total_steps() const noexcept { return steps_per_epoch_ * config_.epochs; }
  std::size_t position() const noexcept { return position_; }
  std::size_t skipped_batches() const noexcept { return skipped_; }
  std::size_t skipped_graphs() const noexcept { return oversized_; }
  const std::vector<TraceRow>& trace() const noexcept { return trace_; }
  const AdamW<float>& optimizer() const noexcept { return optimizer_; }
  const TrainConfig& config() const noexcept { return config_; }
  const std::vector<std::filesystem::path>& checkpoints() const noexcept { return written_; }

  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  bool is_snapshot(std::size_t position) const;

  GfoldsModel<float>& model_;
  TrainConfig config_;
  std::vector<GraphDoc> corpus_;
  AdamW<float> optimizer_;
  std::size_t steps_per_epoch_ = 0;
  std::size_t position_ = 0;
  std::size_t skipped_ = 0;
  std::size_t oversized_ = 0;
  std::vector<TraceRow> trace_;
  std::filesystem::path checkpoint_dir_;
  std::vector<std::filesystem::path> written_;
  std::function<void(const TraceRow&)> on_step_;
};

}  // namespace gfolds
