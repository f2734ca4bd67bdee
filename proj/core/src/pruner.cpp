#include "prunescope/pruner.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"
#include "prunescope/progress.hpp"

namespace prunescope {
namespace {

struct Candidate {
  float magnitude;
  std::uint32_t tensor;
  std::uint32_t index;
};

bool before(const Candidate& a, const Candidate& b) {
  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
  if (a.tensor != b.tensor) return a.tensor < b.tensor;
  return a.index < b.index;
}

void check_consistent(const NamedTensorSet& weights, const PruningMask& mask) {
  for (const auto& [name, e] : mask.entries()) {
    const auto& t = weights.at(name);
    if (t.shape != e.shape) throw SchemaError("mask/weight shape mismatch for '" + name + "'");
  }
  if (!mask.is_applied_to(weights)) throw DomainError("weights are not consistent with the mask (masked positions non-zero)");
}

// Drops `counts[t]` smallest kept positions within each tensor group. A single
// group containing every tensor gives global scope.
PruningMask drop_in_groups(const NamedTensorSet& weights, const PruningMask& mask,
                           const std::vector<std::vector<std::string>>& groups, const std::vector<std::int64_t>& counts) {
  PruningMask out = mask;
  out.set_round(mask.round() + 1);
  std::vector<std::string> names;
  for (const auto& [name, e] : mask.entries()) names.push_back(name);
  auto tensor_id = [&](const std::string& n) {
    return static_cast<std::uint32_t>(std::lower_bound(names.begin(), names.end(), n) - names.begin());
  };

  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<Candidate> cands;
    for (const auto& name : groups[g]) {
      const auto& keep = mask.entry(name).keep;
      const auto& w = weights.at(name).data;
      const auto id = tensor_id(name);
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) cands.push_back({std::fabs(w[i]), id, static_cast<std::uint32_t>(i)});
      }
    }
    const auto count = std::clamp<std::int64_t>(counts[g], 0, static_cast<std::int64_t>(cands.size()));
    if (count == 0) continue;
    auto nth = cands.begin() + count;
    std::nth_element(cands.begin(), nth - 1, cands.end(), before);
    // nth_element leaves every element before nth-1 ordered <= it, so the first
    // `count` entries are exactly the `count` smallest under the total order
    for (auto it = cands.begin(); it != nth; ++it) {
      out.entry(names[it->tensor]).keep[it->index] = 0;
    }
  }
  return out;
}

std::vector<std::string> mask_names(const PruningMask& mask) {
  std::vector<std::string> names;
  for (const auto& [name, e] : mask.entries()) names.push_back(name);
  return names;
}

std::int64_t kept_in(const PruningMask::Entry& e) {
  std::int64_t n = 0;
  for (auto k : e.keep) n += k;
  return n;
}

void check_not_exhausted(const PruningMask& result) {
  if (result.kept() == 0) {
    throw ScheduleExhaustedError("pruning round " + std::to_string(result.round()) + " would leave zero weights");
  }
}

}  // namespace

const char* scope_name(PruneScope scope) { return scope == PruneScope::Global ? "global" : "per-layer"; }

PruneScope parse_scope(std::string_view name) {
  if (name == "global") return PruneScope::Global;
  if (name == "per-layer" || name == "layer") return PruneScope::PerLayer;
  throw SchemaError("unknown prune scope '" + std::string(name) + "' (expected global or per-layer)");
}

const char* mode_name(RetrainMode mode) { return mode == RetrainMode::Rewind ? "rewind" : "standard-finetune"; }

RetrainMode parse_mode(std::string_view name) {
  if (name == "rewind") return RetrainMode::Rewind;
  if (name == "standard-finetune" || name == "finetune") return RetrainMode::StandardFinetune;
  throw SchemaError("unknown retrain mode '" + std::string(name) + "' (expected rewind or standard-finetune)");
}

void PruneConfig::validate() const {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("prune.fraction: must lie in (0, 1)");
}

std::string PruneConfig::hash() const {
  nlohmann::ordered_json j{{"fraction", fraction}, {"scope", scope_name(scope)}};
  return sha256_hex(j.dump());
}

double sparsity_after_rounds(int rounds, double fraction) {
  if (rounds < 0) throw DomainError("rounds must be >= 0");
  double f = 1.0;
  for (int r = 0; r < rounds; ++r) f *= (1.0 - fraction);
  return f;
}

PruningMask drop_smallest(const NamedTensorSet& weights, const PruningMask& mask, std::int64_t count) {
  check_consistent(weights, mask);
  return drop_in_groups(weights, mask, {mask_names(mask)}, {count});
}

PruningMask magnitude_prune(const NamedTensorSet& weights, const PruningMask& mask, const PruneConfig& config) {
  config.validate();
  check_consistent(weights, mask);
  if (mask.kept() == 0) throw ScheduleExhaustedError("mask keeps no weights");
  PruningMask out;
  if (config.scope == PruneScope::Global) {
    const auto drop = static_cast<std::int64_t>(std::floor(config.fraction * static_cast<double>(mask.kept())));
    out = drop_in_groups(weights, mask, {mask_names(mask)}, {drop});
  } else {
    std::vector<std::vector<std::string>> groups;
    std::vector<std::int64_t> counts;
    for (const auto& [name, e] : mask.entries()) {
      groups.push_back({name});
      counts.push_back(static_cast<std::int64_t>(std::floor(config.fraction * static_cast<double>(kept_in(e)))));
    }
    out = drop_in_groups(weights, mask, groups, counts);
  }
  check_not_exhausted(out);
  return out;
}

PruningMask schedule_prune(const NamedTensorSet& weights, const PruningMask& mask, const PruneConfig& config) {
  config.validate();
  check_consistent(weights, mask);
  const double target_fraction = sparsity_after_rounds(mask.round() + 1, config.fraction);
  auto target_for = [&](std::int64_t total) {
    return static_cast<std::int64_t>(std::llround(target_fraction * static_cast<double>(total)));
  };
  PruningMask out;
  if (config.scope == PruneScope::Global) {
    const auto target = target_for(mask.total());
    if (target == 0) throw ScheduleExhaustedError("pruning round " + std::to_string(mask.round() + 1) + " would leave zero weights");
    out = drop_in_groups(weights, mask, {mask_names(mask)}, {std::max<std::int64_t>(0, mask.kept() - target)});
  } else {
    std::vector<std::vector<std::string>> groups;
    std::vector<std::int64_t> counts;
    for (const auto& [name, e] : mask.entries()) {
      groups.push_back({name});
      counts.push_back(std::max<std::int64_t>(0, kept_in(e) - target_for(static_cast<std::int64_t>(e.keep.size()))));
    }
    out = drop_in_groups(weights, mask, groups, counts);
  }
  check_not_exhausted(out);
  return out;
}

RewoundModel rewind(const CheckpointSeries& series, int epoch, const PruningMask& mask, const Network& architecture) {
  const Snapshot& snap = series.at(epoch);  // throws LookupError
  RewoundModel model{architecture, snap.momentum, snap.rng, epoch};
  model.net.load_state(snap.weights);
  mask.apply(model.net.state());
  mask.apply(model.momentum);
  return model;
}

TrainResult replay(RewoundModel& model, const PruningMask& mask, const ClassificationSet& data,
                   const TrainingSchedule& schedule, std::optional<int> replay_epochs) {
  if (replay_epochs && *replay_epochs < 0) throw DomainError("replay_epochs must be >= 0");
  TrainingSchedule s = schedule;
  s.seed = model.rng.seed;
  TrainOptions options;
  options.mask = &mask;
  options.start_epoch = model.epoch;
  options.stop_epoch = replay_epochs ? std::min(schedule.epochs, model.epoch + *replay_epochs) : schedule.epochs;
  options.initial_momentum = &model.momentum;
  return train(model.net, data, s, options);
}

PruneRound prune_and_retrain(const Network& trained, const PruningMask& previous, const CheckpointSeries& series,
                             const ClassificationSet& data, const TrainingSchedule& schedule,
                             const PruneConfig& config, const IterateOptions& options) {
  PruningMask mask = schedule_prune(trained.state(), previous, config);
  log_progress({{"stage", "prune"}, {"round", std::to_string(mask.round())},
                {"fraction_remaining", format_double(mask.fraction_remaining())}});
  if (options.mode == RetrainMode::Rewind) {
    RewoundModel model = rewind(series, options.rewind_epoch, mask, trained);
    replay(model, mask, data, schedule, options.replay_epochs);
    return {mask.round(), std::move(mask), std::move(model.net)};
  }
  Network net = trained;
  mask.apply(net.state());
  finetune_standard(net, data, mask, options.finetune_epochs, schedule);
  return {mask.round(), std::move(mask), std::move(net)};
}

std::vector<PruneRound> iterate_prune(const Network& architecture, const CheckpointSeries& series,
                                      const ClassificationSet& data, const TrainingSchedule& schedule,
                                      const PruneConfig& config, int rounds, const IterateOptions& options) {
  if (rounds < 1) throw DomainError("rounds must be >= 1");
  config.validate();
  if (options.mode == RetrainMode::Rewind && !series.has(options.rewind_epoch)) {
    throw LookupError("no checkpoint for rewind epoch " + std::to_string(options.rewind_epoch));
  }
  Network current = architecture;
  current.load_state(series.at(series.last_epoch()).weights);
  PruningMask mask = PruningMask::full(current.state());

  std::vector<PruneRound> out;
  for (int r = 1; r <= rounds; ++r) {
    PruneRound round = prune_and_retrain(current, mask, series, data, schedule, config, options);
    if (options.on_round) options.on_round(round.round, round.mask, round.net);
    mask = round.mask;
    current = round.net;
    out.push_back(std::move(round));
  }
  return out;
}

}  // namespace prunescope
