#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prunescope/classification.hpp"
#include "prunescope/mask.hpp"
#include "prunescope/network.hpp"
#include "prunescope/trainer.hpp"

namespace prunescope {

enum class PruneScope { Global, PerLayer };
enum class RetrainMode { Rewind, StandardFinetune };

const char* scope_name(PruneScope scope);
PruneScope parse_scope(std::string_view name);
const char* mode_name(RetrainMode mode);
RetrainMode parse_mode(std::string_view name);

struct PruneConfig {
  double fraction = 0.2;  // of the currently kept weights, per round
  PruneScope scope = PruneScope::Global;

  void validate() const;
  std::string hash() const;
};

/// (1 - fraction)^rounds.
double sparsity_after_rounds(int rounds, double fraction = 0.2);

/// Drops exactly floor(fraction * kept) more weights (per tensor in per-layer
/// scope): the smallest |w| among kept positions, ties broken by tensor name
/// then flat index. Returns a subset of `mask` with round + 1.
PruningMask magnitude_prune(const NamedTensorSet& weights, const PruningMask& mask, const PruneConfig& config);

/// Like magnitude_prune, but the number dropped is chosen so that the kept
/// count equals round((1 - fraction)^(r+1) * total) for the next round r + 1,
/// keeping iterated rounds within one weight of the geometric schedule.
PruningMask schedule_prune(const NamedTensorSet& weights, const PruningMask& mask, const PruneConfig& config);

/// Drops the `count` smallest-magnitude kept positions across all mask tensors.
PruningMask drop_smallest(const NamedTensorSet& weights, const PruningMask& mask, std::int64_t count);

/// A network restored from a checkpoint with a mask applied, plus the
/// optimizer state to continue training from that epoch.
struct RewoundModel {
  Network net;
  NamedTensorSet momentum;
  RngState rng;
  int epoch = 0;
};

/// Restores weights, momentum and RNG state of `epoch` and zeroes the
/// dropped positions. `architecture` supplies the layer stack.
RewoundModel rewind(const CheckpointSeries& series, int epoch, const PruningMask& mask, const Network& architecture);

/// Trains a rewound model under its mask with the original schedule from the
/// rewind epoch. With `replay_epochs` set (abbreviated replay) training stops
/// after that many epochs, or at the schedule end if sooner.
TrainResult replay(RewoundModel& model, const PruningMask& mask, const ClassificationSet& data,
                   const TrainingSchedule& schedule, std::optional<int> replay_epochs = std::nullopt);

struct IterateOptions {
  RetrainMode mode = RetrainMode::Rewind;
  int rewind_epoch = 1;
  std::optional<int> replay_epochs;  // rewind mode; full replay when empty
  int finetune_epochs = 2;           // standard-finetune mode
  std::function<void(int round, const PruningMask&, const Network&)> on_round;
};

struct PruneRound {
  int round;
  PruningMask mask;
  Network net;
};

/// Iterative pruning starting from the final snapshot of `series`: each round
/// prunes the previous round's trained weights, then retrains.
std::vector<PruneRound> iterate_prune(const Network& architecture, const CheckpointSeries& series,
                                      const ClassificationSet& data, const TrainingSchedule& schedule,
                                      const PruneConfig& config, int rounds, const IterateOptions& options);

/// One round of iterate_prune: prune `trained` (already masked by `previous`)
/// and retrain. Returns the new mask and trained network.
PruneRound prune_and_retrain(const Network& trained, const PruningMask& previous, const CheckpointSeries& series,
                             const ClassificationSet& data, const TrainingSchedule& schedule,
                             const PruneConfig& config, const IterateOptions& options);

}  // namespace prunescope
