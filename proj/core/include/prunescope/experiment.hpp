#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prunescope/dissector.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/metrics.hpp"
#include "prunescope/micro_broden.hpp"
#include "prunescope/pruner.hpp"
#include "prunescope/resnet.hpp"
#include "prunescope/trainer.hpp"

namespace prunescope {

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  /// One independent trial per seed (model initialization and data order).
  std::vector<std::uint64_t> seeds = {1};
  int rounds = 14;
  std::filesystem::path output_root = "runs/default";

  /// Either an existing concept dataset or a micro-Broden spec to generate.
  std::optional<std::filesystem::path> data_root;
  MicroBrodenSpec generate;

  ModelSpec model;
  TrainingSchedule training;

  PruneConfig pruning;
  RetrainMode retrain_mode = RetrainMode::Rewind;
  int rewind_epoch = 1;
  std::optional<int> replay_epochs;  // empty: full replay
  int finetune_epochs = 2;

  DissectionConfig dissection;
  std::string eval_split = "val";
  std::string train_split = "train";
  RetainedDenominator retained_denominator = RetainedDenominator::Original;

  /// Fully expanded JSON with every default written out.
  std::string to_json() const;
};

/// Raised by validate_config with every violation, each prefixed by its field path.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses and checks a config. Paths inside are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig validate_config(const std::filesystem::path& path);

struct RunOptions {
  /// Also continue a partially written training run from its last checkpoint.
  bool resume_training = false;
  /// Stop after this many stages have executed (cached stages do not count);
  /// used to simulate interruption.
  std::optional<int> max_stages;
  /// Run only the stages needed for this target: "data", "train",
  /// "prune:<r>", "dissect:<r>" or "report" (default: everything).
  std::string target;
};

struct RunSummary {
  int executed = 0;
  int skipped = 0;
  bool interrupted = false;
  std::vector<std::string> executed_stages;
};

/// Runs (or continues) the experiment under config.output_root. Completed
/// stages whose recorded artifact hashes still verify are skipped; a stage
/// that runs forces every stage depending on it to run too.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

std::filesystem::path trial_dir(const ExperimentConfig& config, std::uint64_t seed);
std::filesystem::path round_dir(const ExperimentConfig& config, std::uint64_t seed, int round);
std::filesystem::path data_dir(const ExperimentConfig& config);

}  // namespace prunescope
