#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prunescope/classification.hpp"
#include "prunescope/mask.hpp"
#include "prunescope/network.hpp"

namespace prunescope {

/// Stepped learning-rate schedule and SGD settings. Epochs are numbered
/// 0 .. epochs-1; the learning rate is divided by decay_factor at each listed
/// decay epoch.
struct TrainingSchedule {
  int epochs = 12;
  double initial_lr = 0.1;
  double decay_factor = 10.0;
  std::vector<int> decay_epochs = {6, 9};
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  float bn_momentum = 0.1f;
  std::uint64_t seed = 0;

  void validate() const;
  std::string canonical_json() const;
};

/// initial_lr * decay_factor^-(number of decay epochs <= epoch).
double learning_rate_at(const TrainingSchedule& schedule, int epoch);

/// Data order for epoch e is a pure function of (seed, e), so a run restarted
/// at epoch e replays the original batch sequence.
struct RngState {
  std::uint64_t seed = 0;
  int epoch = 0;

  std::string encode() const;
  static RngState decode(const std::string& text);
  /// Permutation of [0, n) for this epoch.
  std::vector<std::size_t> epoch_order(std::size_t n) const;
  bool operator==(const RngState&) const = default;
};

/// Model state at the start of `epoch` (epoch T holds the final model).
struct Snapshot {
  int epoch = 0;
  NamedTensorSet weights;
  NamedTensorSet momentum;
  RngState rng;
};

/// Contiguous, append-only run of per-epoch snapshots.
class CheckpointSeries {
 public:
  void append(Snapshot snapshot);
  bool empty() const { return snapshots_.empty(); }
  std::size_t size() const { return snapshots_.size(); }
  bool has(int epoch) const;
  const Snapshot& at(int epoch) const;
  int first_epoch() const;
  int last_epoch() const;
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }

  /// `epoch_<e>/{model.bin,optimizer.bin,rng.bin}` plus `series.json`.
  void save(const std::filesystem::path& dir, const std::string& spec_hash) const;
  /// Loads and hash-verifies every listed epoch.
  static CheckpointSeries load(const std::filesystem::path& dir);

 private:
  std::vector<Snapshot> snapshots_;
};

void save_snapshot(const std::filesystem::path& dir, const Snapshot& snapshot, const std::string& spec_hash);

struct LrRecord {
  int epoch;
  int step;
  double lr;
};

struct EpochReport {
  int epoch;
  double lr;
  double mean_loss;
  double train_accuracy;
};

struct TrainOptions {
  const PruningMask* mask = nullptr;
  int start_epoch = 0;
  /// Exclusive end epoch; defaults to schedule.epochs.
  std::optional<int> stop_epoch;
  /// Overrides the schedule (standard fine-tuning).
  std::optional<double> constant_lr;
  /// Momentum buffers to resume from; zeros when absent.
  const NamedTensorSet* initial_momentum = nullptr;
  /// When set, every snapshot is written here as soon as it exists.
  std::filesystem::path checkpoint_dir;
  std::string spec_hash;
  std::function<void(const EpochReport&)> on_epoch;
};

struct TrainResult {
  CheckpointSeries series;
  std::vector<LrRecord> lr_trace;
  std::vector<EpochReport> epochs;
};

/// Momentum SGD with weight decay. Masked positions have their gradients
/// zeroed before and their weights zeroed after every step.
TrainResult train(Network& net, const ClassificationSet& data, const TrainingSchedule& schedule,
                  const TrainOptions& options = {});

/// `epochs` epochs at the schedule's final learning rate, starting from the
/// network's current weights with zero momentum.
TrainResult finetune_standard(Network& net, const ClassificationSet& data, const PruningMask& mask, int epochs,
                              const TrainingSchedule& schedule);

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad);

}  // namespace prunescope
