#include "prunescope/trainer.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "prunescope/archive.hpp"
#include "prunescope/errors.hpp"
#include "prunescope/hashing.hpp"
#include "prunescope/progress.hpp"

namespace fs = std::filesystem;

namespace prunescope {

void TrainingSchedule::validate() const {
  if (epochs < 0) throw DomainError("schedule.epochs: must be >= 0");
  if (!(initial_lr > 0.0)) throw DomainError("schedule.initial_lr: must be > 0");
  if (!(decay_factor > 0.0)) throw DomainError("schedule.decay_factor: must be > 0");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= 0 || decay_epochs[i] >= epochs) {
      throw DomainError("schedule.decay_epochs: every decay epoch must lie in (0, epochs)");
    }
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) {
      throw DomainError("schedule.decay_epochs: must be strictly increasing");
    }
  }
  if (batch_size <= 0) throw DomainError("schedule.batch_size: must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw DomainError("schedule.momentum: must be in [0, 1)");
  if (weight_decay < 0.0) throw DomainError("schedule.weight_decay: must be >= 0");
  if (!(bn_momentum > 0.0f && bn_momentum <= 1.0f)) throw DomainError("schedule.bn_momentum: must be in (0, 1]");
}

std::string TrainingSchedule::canonical_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["initial_lr"] = initial_lr;
  j["decay_factor"] = decay_factor;
  j["decay_epochs"] = decay_epochs;
  j["batch_size"] = batch_size;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["bn_momentum"] = bn_momentum;
  j["seed"] = seed;
  return j.dump();
}

double learning_rate_at(const TrainingSchedule& schedule, int epoch) {
  if (epoch < 0 || epoch >= schedule.epochs) {
    throw DomainError("epoch " + std::to_string(epoch) + " outside schedule [0, " +
                      std::to_string(schedule.epochs) + ")");
  }
  double lr = schedule.initial_lr;
  for (int d : schedule.decay_epochs) {
    if (d <= epoch) lr /= schedule.decay_factor;
  }
  return lr;
}

std::string RngState::encode() const { return std::to_string(seed) + " " + std::to_string(epoch); }

RngState RngState::decode(const std::string& text) {
  std::istringstream in(text);
  RngState s;
  if (!(in >> s.seed >> s.epoch)) throw SchemaError("malformed RNG state '" + text + "'");
  return s;
}

std::vector<std::size_t> RngState::epoch_order(std::size_t n) const {
  // seed_seq and mt19937_64 are fully specified by the standard; the shuffle is
  // written out for the same reason.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  return order;
}

// ---------------------------------------------------------------- series

void CheckpointSeries::append(Snapshot snapshot) {
  if (!snapshots_.empty() && snapshot.epoch != snapshots_.back().epoch + 1) {
    throw DomainError("checkpoint epochs must be contiguous: got " + std::to_string(snapshot.epoch) + " after " +
                      std::to_string(snapshots_.back().epoch));
  }
  snapshots_.push_back(std::move(snapshot));
}

bool CheckpointSeries::has(int epoch) const {
  return !snapshots_.empty() && epoch >= first_epoch() && epoch <= last_epoch();
}

const Snapshot& CheckpointSeries::at(int epoch) const {
  if (!has(epoch)) throw LookupError("no checkpoint for epoch " + std::to_string(epoch));
  return snapshots_[static_cast<std::size_t>(epoch - first_epoch())];
}

int CheckpointSeries::first_epoch() const {
  if (snapshots_.empty()) throw LookupError("empty checkpoint series");
  return snapshots_.front().epoch;
}

int CheckpointSeries::last_epoch() const {
  if (snapshots_.empty()) throw LookupError("empty checkpoint series");
  return snapshots_.back().epoch;
}

namespace {

struct SnapshotHashes {
  std::string model, optimizer, rng;
};

SnapshotHashes write_snapshot_files(const fs::path& dir, const Snapshot& s, const std::string& spec_hash) {
  const auto edir = dir / ("epoch_" + std::to_string(s.epoch));
  ArchiveManifest m{kArchiveFormatVersion, s.epoch, spec_hash, s.rng.encode()};
  const auto model = encode_archive(s.weights, m);
  const auto optimizer = encode_archive(s.momentum, m);
  const auto rng = s.rng.encode() + "\n";
  write_file_atomic(edir / "model.bin", model);
  write_file_atomic(edir / "optimizer.bin", optimizer);
  write_file_atomic(edir / "rng.bin", rng);
  return {sha256_hex(model), sha256_hex(optimizer), sha256_hex(rng)};
}

nlohmann::ordered_json read_series_manifest(const fs::path& dir) {
  const auto path = dir / "series.json";
  if (!fs::exists(path)) return nlohmann::ordered_json{{"spec_hash", ""}, {"epochs", nlohmann::ordered_json::array()}};
  try {
    return nlohmann::ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void upsert_manifest_entry(nlohmann::ordered_json& manifest, int epoch, const SnapshotHashes& h) {
  nlohmann::ordered_json entry{{"epoch", epoch}, {"model", h.model}, {"optimizer", h.optimizer}, {"rng", h.rng}};
  auto& epochs = manifest["epochs"];
  for (auto& e : epochs) {
    if (e.at("epoch").get<int>() == epoch) {
      e = entry;
      return;
    }
  }
  // keep only a contiguous prefix ending at this epoch
  nlohmann::ordered_json kept = nlohmann::ordered_json::array();
  for (auto& e : epochs) {
    if (e.at("epoch").get<int>() < epoch) kept.push_back(e);
  }
  kept.push_back(entry);
  epochs = kept;
}

}  // namespace

void save_snapshot(const fs::path& dir, const Snapshot& snapshot, const std::string& spec_hash) {
  auto hashes = write_snapshot_files(dir, snapshot, spec_hash);
  auto manifest = read_series_manifest(dir);
  manifest["spec_hash"] = spec_hash;
  // a snapshot at epoch e invalidates any later epochs left from an earlier run
  nlohmann::ordered_json kept = nlohmann::ordered_json::array();
  for (auto& e : manifest["epochs"]) {
    if (e.at("epoch").get<int>() < snapshot.epoch) kept.push_back(e);
  }
  manifest["epochs"] = kept;
  upsert_manifest_entry(manifest, snapshot.epoch, hashes);
  write_file_atomic(dir / "series.json", manifest.dump(2) + "\n");
}

void CheckpointSeries::save(const fs::path& dir, const std::string& spec_hash) const {
  nlohmann::ordered_json manifest{{"spec_hash", spec_hash}, {"epochs", nlohmann::ordered_json::array()}};
  for (const auto& s : snapshots_) upsert_manifest_entry(manifest, s.epoch, write_snapshot_files(dir, s, spec_hash));
  write_file_atomic(dir / "series.json", manifest.dump(2) + "\n");
}

CheckpointSeries CheckpointSeries::load(const fs::path& dir) {
  if (!fs::exists(dir / "series.json")) throw IngestionError("missing file: " + (dir / "series.json").string());
  auto manifest = read_series_manifest(dir);
  CheckpointSeries series;
  try {
    for (const auto& e : manifest.at("epochs")) {
      const int epoch = e.at("epoch").get<int>();
      const auto edir = dir / ("epoch_" + std::to_string(epoch));
      const auto model = read_file(edir / "model.bin");
      const auto optimizer = read_file(edir / "optimizer.bin");
      const auto rng = read_file(edir / "rng.bin");
      if (sha256_hex(model) != e.at("model").get<std::string>() ||
          sha256_hex(optimizer) != e.at("optimizer").get<std::string>() ||
          sha256_hex(rng) != e.at("rng").get<std::string>()) {
        throw DataError(edir.string() + ": checkpoint content does not match series.json hash");
      }
      Snapshot s;
      s.epoch = epoch;
      s.weights = decode_archive(model, (edir / "model.bin").string()).tensors;
      s.momentum = decode_archive(optimizer, (edir / "optimizer.bin").string()).tensors;
      s.rng = RngState::decode(rng);
      series.append(std::move(s));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError((dir / "series.json").string() + ": " + ex.what());
  }
  return series;
}

// ---------------------------------------------------------------- training

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad) {
  const auto n = logits.dim(0), k = logits.dim(1);
  grad = Tensor(logits.shape);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float* row = logits.ptr() + i * k;
    float* g = grad.ptr() + i * k;
    float mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    const int y = labels[static_cast<std::size_t>(i)];
    total += std::log(z) - static_cast<double>(row[y] - mx);
    for (std::int64_t j = 0; j < k; ++j) {
      double p = std::exp(static_cast<double>(row[j] - mx)) / z;
      g[j] = static_cast<float>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  return total / static_cast<double>(n);
}

namespace {

void zero_masked(const PruningMask& mask, NamedTensorSet& tensors) { mask.apply(tensors); }

void sgd_step(NamedTensorSet& state, NamedTensorSet& grads, NamedTensorSet& momentum, double lr,
              const TrainingSchedule& s) {
  const float flr = static_cast<float>(lr);
  const float mu = static_cast<float>(s.momentum);
  const float wd = static_cast<float>(s.weight_decay);
  for (auto& [name, g] : grads) {
    auto& w = state.at(name).data;
    auto& v = momentum.at(name).data;
    auto& gd = g.value.data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float grad = gd[i] + wd * w[i];
      v[i] = mu * v[i] + grad;
      w[i] -= flr * v[i];
    }
  }
}

}  // namespace

TrainResult train(Network& net, const ClassificationSet& data, const TrainingSchedule& schedule,
                  const TrainOptions& options) {
  schedule.validate();
  const int start = options.start_epoch;
  const int stop = options.stop_epoch.value_or(schedule.epochs);
  if (start < 0 || stop < start) throw DomainError("invalid epoch range [" + std::to_string(start) + ", " +
                                                   std::to_string(stop) + ")");
  if (!options.constant_lr && stop > schedule.epochs) {
    throw DomainError("stop epoch " + std::to_string(stop) + " is past the schedule's " +
                      std::to_string(schedule.epochs) + " epochs");
  }
  if (stop > start && data.size() == 0) throw DomainError("training set is empty");
  if (options.mask && !options.mask->is_applied_to(net.state())) {
    throw DomainError("mask is not applied: masked positions must already be zero");
  }

  NamedTensorSet momentum = options.initial_momentum ? *options.initial_momentum : net.state().trainable_zeros_like();
  if (options.mask) zero_masked(*options.mask, momentum);

  TrainResult result;
  auto snapshot = [&](int epoch) {
    Snapshot s{epoch, net.state(), momentum, RngState{schedule.seed, epoch}};
    if (!options.checkpoint_dir.empty()) save_snapshot(options.checkpoint_dir, s, options.spec_hash);
    result.series.append(std::move(s));
  };
  snapshot(start);

  NamedTensorSet grads = net.state().trainable_zeros_like();
  const std::size_t n = data.size();
  const auto bs = static_cast<std::size_t>(schedule.batch_size);
  for (int epoch = start; epoch < stop; ++epoch) {
    const double lr = options.constant_lr ? *options.constant_lr : learning_rate_at(schedule, epoch);
    const auto order = RngState{schedule.seed, epoch}.epoch_order(n);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    int step = 0;
    for (std::size_t begin = 0; begin < n; begin += bs, ++step) {
      const std::size_t end = std::min(n, begin + bs);
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (auto r : rows) labels.push_back(data.labels[r]);

      Tape tape;
      Tensor logits = net.forward(data.gather(rows), Mode::Train, &tape);
      Tensor dlogits;
      const double loss = softmax_cross_entropy(logits, labels, dlogits);
      if (!std::isfinite(loss)) throw TrainingError(epoch, "non-finite loss at step " + std::to_string(step));
      loss_sum += loss * static_cast<double>(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* row = logits.ptr() + i * logits.dim(1);
        correct += (std::max_element(row, row + logits.dim(1)) - row) == labels[i] ? 1 : 0;
      }

      for (auto& [name, g] : grads) std::fill(g.value.data.begin(), g.value.data.end(), 0.0f);
      net.backward(tape, dlogits, grads);
      if (options.mask) zero_masked(*options.mask, grads);
      sgd_step(net.state(), grads, momentum, lr, schedule);
      if (options.mask) zero_masked(*options.mask, net.state());
      net.update_running_stats(tape, schedule.bn_momentum);
      result.lr_trace.push_back({epoch, step, lr});
    }
    EpochReport report{epoch, lr, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
    if (!std::isfinite(report.mean_loss)) throw TrainingError(epoch, "non-finite mean loss");
    result.epochs.push_back(report);
    log_progress({{"stage", "train"}, {"epoch", std::to_string(epoch)}, {"lr", format_double(lr)},
                  {"loss", format_double(report.mean_loss)}, {"train_acc", format_double(report.train_accuracy)}});
    if (options.on_epoch) options.on_epoch(report);
    snapshot(epoch + 1);
  }
  return result;
}

TrainResult finetune_standard(Network& net, const ClassificationSet& data, const PruningMask& mask, int epochs,
                              const TrainingSchedule& schedule) {
  if (epochs < 0) throw DomainError("fine-tuning epochs must be >= 0");
  if (schedule.epochs <= 0) throw DomainError("fine-tuning needs a schedule with at least one epoch");
  TrainOptions options;
  options.mask = &mask;
  options.start_epoch = schedule.epochs;
  options.stop_epoch = schedule.epochs + epochs;
  options.constant_lr = learning_rate_at(schedule, schedule.epochs - 1);
  return train(net, data, schedule, options);
}

}  // namespace prunescope
