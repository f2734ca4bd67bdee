#include "prunescope/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prunescope/archive.hpp"
#include "prunescope/classification.hpp"
#include "prunescope/hashing.hpp"
#include "prunescope/plot.hpp"
#include "prunescope/progress.hpp"

namespace prunescope {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

ConfigError::ConfigError(std::vector<std::string> problems)
    : ValidationError([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

std::string ExperimentConfig::to_json() const {
  ojson j;
  j["schema_version"] = schema_version;
  j["output_root"] = output_root.generic_string();
  j["seeds"] = seeds;
  j["rounds"] = rounds;

  auto& data = j["data"];
  if (data_root) {
    data["root"] = data_root->generic_string();
  } else {
    auto& g = data["generate"];
    g["height"] = generate.height;
    g["width"] = generate.width;
    g["splits"] = ojson::object();
    for (const auto& [name, n] : generate.splits) g["splits"][name] = n;
    g["palette"] = generate.palette;
    g["background"] = generate.background;
    g["shapes"] = generate.shapes;
    g["textures"] = generate.textures;
    g["shape_size"] = generate.shape_size;
    g["noise"] = generate.noise;
    g["seed"] = generate.seed;
  }

  auto& m = j["model"];
  m["in_channels"] = model.in_channels;
  m["input_height"] = model.input_height;
  m["input_width"] = model.input_width;
  m["widths"] = model.widths;
  m["blocks"] = model.blocks;
  m["num_classes"] = model.num_classes;
  m["dissection_layers"] = model.dissection_layers;

  auto& t = j["training"];
  t["epochs"] = training.epochs;
  t["initial_lr"] = training.initial_lr;
  t["decay_factor"] = training.decay_factor;
  t["decay_epochs"] = training.decay_epochs;
  t["batch_size"] = training.batch_size;
  t["momentum"] = training.momentum;
  t["weight_decay"] = training.weight_decay;
  t["bn_momentum"] = training.bn_momentum;

  auto& p = j["pruning"];
  p["fraction"] = pruning.fraction;
  p["scope"] = scope_name(pruning.scope);
  p["mode"] = mode_name(retrain_mode);
  p["rewind_epoch"] = rewind_epoch;
  if (replay_epochs) {
    p["replay"] = *replay_epochs;
  } else {
    p["replay"] = "full";
  }
  p["finetune_epochs"] = finetune_epochs;

  auto& d = j["dissection"];
  d["layers"] = dissection.layers;
  d["split"] = dissection.split;
  d["quantile"] = dissection.quantile;
  d["iou_threshold"] = dissection.iou_threshold;
  d["reservoir_cap"] = dissection.reservoir_cap;
  d["batch_size"] = dissection.batch_size;

  auto& e = j["evaluation"];
  e["train_split"] = train_split;
  e["eval_split"] = eval_split;
  e["retained_denominator"] = retained_denominator == RetainedDenominator::Original ? "original" : "pruned";
  return j.dump(2) + "\n";
}

namespace {

// Walks a JSON object, collecting type errors and unknown keys with full paths.
class Reader {
 public:
  Reader(const ojson& node, std::string path, std::vector<std::string>& errors)
      : node_(node), path_(std::move(path)), errors_(errors) {
    if (!node_.is_object()) error(path_.empty() ? "<root>" : path_, "expected an object");
  }
  ~Reader() {
    if (!node_.is_object()) return;
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) error(field(key), "unknown field");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.is_object() && node_.contains(key);
  }
  const ojson* get(const std::string& key) { return has(key) ? &node_.at(key) : nullptr; }

  template <typename T>
  void read(const std::string& key, T& out) {
    const ojson* v = get(key);
    if (!v) return;
    try {
      if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::invalid_argument("expected a number");
      }
      out = v->get<T>();
    } catch (const std::exception& e) {
      error(field(key), e.what());
    }
  }

  void error(const std::string& where, const std::string& what) { errors_.push_back(where + ": " + what); }

  const ojson& node() const { return node_; }

 private:
  const ojson& node_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::string clean_json_error(const std::string& what) {
  // nlohmann prefixes "[json.exception.type_error.302] "
  auto pos = what.find("] ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

template <typename Fn>
void check(std::vector<std::string>& errors, const std::string& prefix, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    errors.push_back(prefix + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  ojson root;
  try {
    root = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into line:column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError({"line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                       clean_json_error(e.what())});
  }

  ExperimentConfig c;
  std::vector<std::string> errors;
  {
    Reader r(root, "", errors);
    if (!r.has("schema_version")) {
      errors.push_back("schema_version: required");
    } else {
      r.read("schema_version", c.schema_version);
      if (c.schema_version != kConfigSchemaVersion) {
        errors.push_back("schema_version: unsupported version " + std::to_string(c.schema_version) + " (expected " +
                         std::to_string(kConfigSchemaVersion) + ")");
      }
    }
    std::string out = c.output_root.generic_string();
    r.read("output_root", out);
    c.output_root = out;
    r.read("seeds", c.seeds);
    r.read("rounds", c.rounds);

    if (const ojson* data = r.get("data")) {
      Reader d(*data, "data", errors);
      const bool has_root = d.has("root"), has_gen = d.has("generate");
      if (has_root == has_gen) errors.push_back("data: exactly one of 'root' or 'generate' is required");
      if (has_root) {
        std::string p;
        d.read("root", p);
        c.data_root = p;
      }
      if (const ojson* gen = d.get("generate")) {
        Reader g(*gen, "data.generate", errors);
        auto& s = c.generate;
        g.read("height", s.height);
        g.read("width", s.width);
        if (const ojson* splits = g.get("splits")) {
          if (!splits->is_object()) {
            errors.push_back("data.generate.splits: expected an object of split name to image count");
          } else {
            s.splits.clear();
            for (const auto& [name, n] : splits->items()) {
              if (!n.is_number_integer()) {
                errors.push_back("data.generate.splits." + name + ": expected an integer");
              } else {
                s.splits.emplace_back(name, n.get<int>());
              }
            }
          }
        }
        g.read("palette", s.palette);
        g.read("background", s.background);
        g.read("shapes", s.shapes);
        g.read("textures", s.textures);
        g.read("shape_size", s.shape_size);
        g.read("noise", s.noise);
        g.read("seed", s.seed);
      }
    }

    if (const ojson* model = r.get("model")) {
      Reader m(*model, "model", errors);
      m.read("in_channels", c.model.in_channels);
      m.read("input_height", c.model.input_height);
      m.read("input_width", c.model.input_width);
      m.read("widths", c.model.widths);
      m.read("blocks", c.model.blocks);
      m.read("num_classes", c.model.num_classes);
      m.read("dissection_layers", c.model.dissection_layers);
    }

    if (const ojson* training = r.get("training")) {
      Reader t(*training, "training", errors);
      t.read("epochs", c.training.epochs);
      t.read("initial_lr", c.training.initial_lr);
      t.read("decay_factor", c.training.decay_factor);
      t.read("decay_epochs", c.training.decay_epochs);
      t.read("batch_size", c.training.batch_size);
      t.read("momentum", c.training.momentum);
      t.read("weight_decay", c.training.weight_decay);
      t.read("bn_momentum", c.training.bn_momentum);
    }

    if (const ojson* pruning = r.get("pruning")) {
      Reader p(*pruning, "pruning", errors);
      p.read("fraction", c.pruning.fraction);
      std::string scope = scope_name(c.pruning.scope), mode = mode_name(c.retrain_mode);
      p.read("scope", scope);
      p.read("mode", mode);
      check(errors, "pruning.scope", [&] { c.pruning.scope = parse_scope(scope); });
      check(errors, "pruning.mode", [&] { c.retrain_mode = parse_mode(mode); });
      p.read("rewind_epoch", c.rewind_epoch);
      if (const ojson* replay = p.get("replay")) {
        if (replay->is_string() && replay->get<std::string>() == "full") {
          c.replay_epochs.reset();
        } else if (replay->is_number_integer()) {
          c.replay_epochs = replay->get<int>();
          if (*c.replay_epochs < 1) errors.push_back("pruning.replay: abbreviated replay needs >= 1 epoch");
        } else {
          errors.push_back("pruning.replay: expected \"full\" or a number of epochs");
        }
      }
      p.read("finetune_epochs", c.finetune_epochs);
    }

    if (const ojson* dissection = r.get("dissection")) {
      Reader d(*dissection, "dissection", errors);
      d.read("layers", c.dissection.layers);
      d.read("split", c.dissection.split);
      d.read("quantile", c.dissection.quantile);
      d.read("iou_threshold", c.dissection.iou_threshold);
      d.read("reservoir_cap", c.dissection.reservoir_cap);
      d.read("batch_size", c.dissection.batch_size);
    }

    if (const ojson* evaluation = r.get("evaluation")) {
      Reader e(*evaluation, "evaluation", errors);
      e.read("train_split", c.train_split);
      e.read("eval_split", c.eval_split);
      std::string denom = "original";
      e.read("retained_denominator", denom);
      if (denom == "original") {
        c.retained_denominator = RetainedDenominator::Original;
      } else if (denom == "pruned") {
        c.retained_denominator = RetainedDenominator::Pruned;
      } else {
        errors.push_back("evaluation.retained_denominator: expected 'original' or 'pruned'");
      }
    }
  }

  // Semantic checks.
  if (c.rounds < 1) errors.push_back("rounds: must be >= 1 (got " + std::to_string(c.rounds) + ")");
  if (c.seeds.empty()) errors.push_back("seeds: at least one trial seed is required");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    errors.push_back("seeds: duplicate seed");
  }
  if (c.output_root.empty()) errors.push_back("output_root: must be non-empty");
  check(errors, "model", [&] { c.model.validate(); });
  check(errors, "training", [&] { c.training.validate(); });
  check(errors, "pruning", [&] { c.pruning.validate(); });
  check(errors, "dissection", [&] { c.dissection.validate(); });
  if (c.rewind_epoch < 0 || c.rewind_epoch > c.training.epochs) {
    errors.push_back("pruning.rewind_epoch: must lie in [0, training.epochs] = [0, " +
                     std::to_string(c.training.epochs) + "] (got " + std::to_string(c.rewind_epoch) + ")");
  }
  if (c.finetune_epochs < 1) errors.push_back("pruning.finetune_epochs: must be >= 1");

  if (c.data_root) {
    if (c.data_root->is_relative() && !base_dir.empty()) c.data_root = base_dir / *c.data_root;
    check(errors, "data.root", [&] {
      auto index = load_concept_index(*c.data_root);
      (void)index;
    });
  } else {
    check(errors, "data.generate", [&] { c.generate.validate(); });
    std::set<std::string> splits;
    for (const auto& [name, n] : c.generate.splits) splits.insert(name);
    for (const auto& [field, split] : {std::pair<std::string, std::string>{"evaluation.train_split", c.train_split},
                                       {"evaluation.eval_split", c.eval_split},
                                       {"dissection.split", c.dissection.split}}) {
      if (!split.empty() && !splits.count(split)) {
        errors.push_back(field + ": split '" + split + "' is not generated by data.generate.splits");
      }
    }
    if (c.model.num_classes != static_cast<int>(c.generate.shapes.size())) {
      errors.push_back("model.num_classes: must equal the number of generated shapes (" +
                       std::to_string(c.generate.shapes.size()) + ")");
    }
    if (c.model.input_height != c.generate.height || c.model.input_width != c.generate.width) {
      errors.push_back("model.input_height: input size must match data.generate height and width");
    }
  }
  if (c.output_root.is_relative() && !base_dir.empty()) c.output_root = base_dir / c.output_root;

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

ExperimentConfig validate_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({path.string() + ": cannot read file"});
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    std::vector<std::string> problems;
    for (const auto& p : e.problems()) problems.push_back(path.string() + ": " + p);
    throw ConfigError(std::move(problems));
  }
}

// ---------------------------------------------------------------- layout

fs::path data_dir(const ExperimentConfig& config) {
  return config.data_root ? *config.data_root : config.output_root / "data";
}

fs::path trial_dir(const ExperimentConfig& config, std::uint64_t seed) {
  return config.output_root / ("trial_" + std::to_string(seed));
}

fs::path round_dir(const ExperimentConfig& config, std::uint64_t seed, int round) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "round_%02d", round);
  return trial_dir(config, seed) / buf;
}

// ---------------------------------------------------------------- pipeline

namespace {

struct Interrupted {};

struct StageRecord {
  std::string key;
  std::map<std::string, std::string> artifacts;  // path relative to output root -> sha256
};

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string json_text(const ojson& j) { return j.dump(); }

class Pipeline {
 public:
  Pipeline(const ExperimentConfig& config, const RunOptions& options) : c_(config), opt_(options) {
    state_path_ = c_.output_root / "state.json";
    load_state();
  }

  RunSummary run() {
    fs::create_directories(c_.output_root);
    write_file_atomic(c_.output_root / "config.json", c_.to_json());
    try {
      execute();
    } catch (const Interrupted&) {
      summary_.interrupted = true;
      log_progress({{"stage", "run"}, {"status", "interrupted"}, {"executed", std::to_string(summary_.executed)}});
    }
    return summary_;
  }

 private:
  // Target selection --------------------------------------------------------
  enum class Level { Data, Train, Prune, Dissect, All };

  void parse_target(Level& level, int& round) const {
    round = c_.rounds;
    const auto& t = opt_.target;
    if (t.empty() || t == "report") {
      level = Level::All;
    } else if (t == "data") {
      level = Level::Data;
    } else if (t == "train") {
      level = Level::Train;
    } else if (t.rfind("prune:", 0) == 0 || t.rfind("dissect:", 0) == 0) {
      level = t[0] == 'p' ? Level::Prune : Level::Dissect;
      round = std::stoi(t.substr(t.find(':') + 1));
      if (round < (level == Level::Prune ? 1 : 0) || round > c_.rounds) {
        throw DomainError("target round " + std::to_string(round) + " outside [1, rounds]");
      }
    } else {
      throw DomainError("unknown run target '" + t + "'");
    }
  }

  void execute() {
    Level level;
    int target_round;
    parse_target(level, target_round);

    stage_data();
    if (level == Level::Data) return;
    for (auto seed : c_.seeds) {
      TrialCache trial;
      stage_train(seed, trial);
      if (level == Level::Train) continue;
      const int last_prune = level == Level::All ? c_.rounds : target_round;
      for (int r = 1; r <= last_prune; ++r) stage_prune(seed, r, trial);
      if (level == Level::Prune) continue;
      if (level == Level::Dissect) {
        stage_dissect(seed, target_round, trial);
        continue;
      }
      for (int r = 0; r <= c_.rounds; ++r) stage_dissect(seed, r, trial);
      stage_report(seed);
    }
    if (level == Level::All) stage_aggregate();
  }

  // Stage engine --------------------------------------------------------------
  std::string rel(const fs::path& p) const { return p.lexically_relative(c_.output_root).generic_string(); }

  void load_state() {
    if (!fs::exists(state_path_)) return;
    try {
      auto j = ojson::parse(read_file(state_path_));
      for (const auto& [name, rec] : j.at("stages").items()) {
        StageRecord r;
        r.key = rec.at("key").get<std::string>();
        for (const auto& [p, h] : rec.at("artifacts").items()) r.artifacts[p] = h.get<std::string>();
        state_[name] = std::move(r);
      }
    } catch (const std::exception& e) {
      log_progress({{"stage", "state"}, {"warning", "unreadable_state"}, {"detail", "\"" + std::string(e.what()) + "\""}});
      state_.clear();
    }
  }

  void save_state() const {
    ojson j;
    j["schema_version"] = kConfigSchemaVersion;
    auto& stages = j["stages"] = ojson::object();
    for (const auto& [name, rec] : state_) {
      stages[name]["key"] = rec.key;
      stages[name]["artifacts"] = ojson::object();
      for (const auto& [p, h] : rec.artifacts) stages[name]["artifacts"][p] = h;
    }
    write_file_atomic(state_path_, j.dump(2) + "\n");
  }

  bool verifies(const StageRecord& rec) const {
    if (rec.artifacts.empty()) return false;
    for (const auto& [p, h] : rec.artifacts) {
      const fs::path full = c_.output_root / p;
      if (!fs::is_regular_file(full) || sha256_file(full) != h) return false;
    }
    return true;
  }

  std::string stage_key(const std::string& name, const std::string& material,
                        const std::vector<std::string>& deps) const {
    Sha256 h;
    h.update(name).update("\n").update(material).update("\n");
    for (const auto& d : deps) {
      const auto& rec = state_.at(d);
      h.update(d).update(rec.key);
      for (const auto& [p, digest] : rec.artifacts) h.update(p).update(digest);
    }
    return h.hex_digest();
  }

  /// Returns true when the body ran.
  bool stage(const std::string& name, const std::vector<std::string>& deps, const std::string& material,
             const std::function<std::vector<fs::path>()>& body) {
    const std::string key = stage_key(name, material, deps);
    const bool upstream_ran = std::any_of(deps.begin(), deps.end(), [&](const auto& d) { return ran_.count(d); });
    auto it = state_.find(name);
    if (it != state_.end() && !upstream_ran && it->second.key == key) {
      if (verifies(it->second)) {
        ++summary_.skipped;
        log_progress({{"stage", name}, {"status", "cached"}});
        return false;
      }
      log_progress({{"stage", name}, {"warning", "stale_state"}, {"action", "recompute"}});
    }
    if (opt_.max_stages && summary_.executed >= *opt_.max_stages) throw Interrupted{};

    state_.erase(name);
    save_state();
    log_progress({{"stage", name}, {"status", "start"}});
    auto artifacts = body();
    StageRecord rec;
    rec.key = key;
    for (const auto& p : artifacts) rec.artifacts[rel(p)] = sha256_file(p);
    state_[name] = std::move(rec);
    save_state();
    ran_.insert(name);
    ++summary_.executed;
    summary_.executed_stages.push_back(name);
    log_progress({{"stage", name}, {"status", "done"}});
    return true;
  }

  // Shared data ---------------------------------------------------------------
  struct TrialCache {
    std::optional<CheckpointSeries> series;
  };

  const ConceptDataset& dataset() {
    if (!dataset_) dataset_ = load_concept_dataset(data_dir(c_));
    return *dataset_;
  }
  const ClassificationSet& train_set() {
    if (!train_set_) train_set_ = make_classification_set(dataset(), c_.train_split);
    return *train_set_;
  }
  const ClassificationSet& eval_set() {
    if (!eval_set_) eval_set_ = make_classification_set(dataset(), c_.eval_split);
    return *eval_set_;
  }

  TrainingSchedule schedule_for(std::uint64_t seed) const {
    TrainingSchedule s = c_.training;
    s.seed = seed;
    return s;
  }

  Network load_network(std::uint64_t seed, const fs::path& path) const {
    Network net = build_model(c_.model, seed);
    net.load_state(read_archive(path).tensors);
    return net;
  }

  static std::string trial_name(std::uint64_t seed) { return "trial_" + std::to_string(seed); }
  static std::string round_stage(const char* what, std::uint64_t seed, int r) {
    return trial_name(seed) + "/" + what + "_" + std::to_string(r);
  }

  // Stages --------------------------------------------------------------------
  void stage_data() {
    const fs::path dir = data_dir(c_);
    std::string material;
    if (c_.data_root) {
      material = "root:" + c_.data_root->generic_string();
    } else {
      auto j = ojson::parse(c_.to_json());
      material = json_text(j["data"]);
    }
    const bool ran = stage("data", {}, material, [&] {
      if (!c_.data_root) {
        fs::remove_all(dir);
        log_progress({{"stage", "gen-data"}, {"root", dir.generic_string()}});
        generate_micro_broden(c_.generate, dir);
      }
      dataset_.reset();
      (void)dataset();
      return files_under(dir);
    });
    if (ran) {
      train_set_.reset();
      eval_set_.reset();
    }
  }

  void stage_train(std::uint64_t seed, TrialCache& trial) {
    const std::string name = trial_name(seed) + "/train";
    const fs::path dir = trial_dir(c_, seed) / "train";
    const fs::path baseline = round_dir(c_, seed, 0) / "model.bin";
    const auto schedule = schedule_for(seed);
    const std::string material = c_.model.canonical_json() + schedule.canonical_json() + c_.train_split;
    stage(name, {"data"}, material, [&] {
      Network net = build_model(c_.model, seed);
      TrainOptions options;
      options.checkpoint_dir = dir;
      options.spec_hash = c_.model.hash();
      NamedTensorSet momentum;
      bool resumed = false;
      if (opt_.resume_training && fs::exists(dir / "series.json")) {
        try {
          auto partial = CheckpointSeries::load(dir);
          if (!partial.empty() && partial.last_epoch() < schedule.epochs) {
            const auto& last = partial.at(partial.last_epoch());
            net.load_state(last.weights);
            momentum = last.momentum;
            options.start_epoch = last.epoch;
            options.initial_momentum = &momentum;
            resumed = true;
            log_progress({{"stage", "train"}, {"trial", std::to_string(seed)}, {"resume_epoch", std::to_string(last.epoch)}});
          }
        } catch (const Error&) {
          log_progress({{"stage", "train"}, {"warning", "unusable_checkpoints"}, {"action", "restart"}});
        }
      }
      if (!resumed) fs::remove_all(dir);
      fs::remove_all(round_dir(c_, seed, 0));
      train(net, train_set(), schedule, options);
      trial.series = CheckpointSeries::load(dir);
      write_archive(baseline, net.state(), ArchiveManifest{kArchiveFormatVersion, schedule.epochs, c_.model.hash(), {}});
      auto files = files_under(dir);
      files.push_back(baseline);
      return files;
    });
  }

  const CheckpointSeries& series(std::uint64_t seed, TrialCache& trial) {
    if (!trial.series) trial.series = CheckpointSeries::load(trial_dir(c_, seed) / "train");
    return *trial.series;
  }

  std::string prune_material() const {
    auto j = ojson::parse(c_.to_json());
    return json_text(j["pruning"]) + json_text(j["training"]);
  }

  void stage_prune(std::uint64_t seed, int r, TrialCache& trial) {
    const std::string name = round_stage("prune", seed, r);
    std::vector<std::string> deps = {trial_name(seed) + "/train"};
    if (r > 1) deps.push_back(round_stage("prune", seed, r - 1));
    const fs::path dir = round_dir(c_, seed, r);
    const std::string material = prune_material() + "round=" + std::to_string(r);
    stage(name, deps, material, [&] {
      const auto& s = series(seed, trial);
      Network previous = build_model(c_.model, seed);
      PruningMask mask;
      if (r == 1) {
        previous.load_state(s.at(s.last_epoch()).weights);
        mask = PruningMask::full(previous.state());
      } else {
        previous = load_network(seed, round_dir(c_, seed, r - 1) / "model.bin");
        mask = read_mask(round_dir(c_, seed, r - 1) / "mask");
      }
      IterateOptions options;
      options.mode = c_.retrain_mode;
      options.rewind_epoch = c_.rewind_epoch;
      options.replay_epochs = c_.replay_epochs;
      options.finetune_epochs = c_.finetune_epochs;
      fs::remove_all(dir);
      auto round = prune_and_retrain(previous, mask, s, train_set(), schedule_for(seed), c_.pruning, options);
      write_mask(dir / "mask", round.mask, MaskProvenance{sha256_hex(material), mask.hash()});
      write_archive(dir / "model.bin", round.net.state(),
                    ArchiveManifest{kArchiveFormatVersion, r, c_.model.hash(), {}});
      auto files = files_under(dir / "mask");
      files.push_back(dir / "model.bin");
      return files;
    });
  }

  void stage_dissect(std::uint64_t seed, int r, TrialCache& trial) {
    (void)trial;
    const std::string name = round_stage("dissect", seed, r);
    const std::string upstream = r == 0 ? trial_name(seed) + "/train" : round_stage("prune", seed, r);
    auto j = ojson::parse(c_.to_json());
    const std::string material = json_text(j["dissection"]) + json_text(j["model"]["dissection_layers"]) +
                                 c_.eval_split + "seed=" + std::to_string(seed);
    const fs::path dir = round_dir(c_, seed, r);
    stage(name, {"data", upstream}, material, [&] {
      Network net = load_network(seed, dir / "model.bin");
      std::optional<PruningMask> mask;
      if (r > 0) mask = read_mask(dir / "mask");
      const double accuracy = evaluate_accuracy(net, eval_set());
      DissectionConfig dc = c_.dissection;
      dc.seed = seed;
      auto report = dissect_network(net, mask ? &*mask : nullptr, dataset(), dc);
      write_report(dir / "report.json", report, dataset().index());
      const double fraction = mask ? mask->fraction_remaining() : 1.0;
      ojson metrics;
      metrics["round"] = r;
      metrics["fraction_remaining"] = fraction;
      metrics["kept_weights"] = mask ? mask->kept() : PruningMask::full(net.state()).total();
      metrics["total_weights"] = PruningMask::full(net.state()).total();
      metrics["accuracy"] = accuracy;
      metrics["units"] = report.units.size();
      metrics["interpretable_units"] = report.interpretable_count();
      write_file_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
      log_progress({{"stage", "dissect"}, {"trial", std::to_string(seed)}, {"round", std::to_string(r)},
                    {"accuracy", format_double(accuracy)},
                    {"interpretable", std::to_string(report.interpretable_count())}});
      return std::vector<fs::path>{dir / "report.json", dir / "metrics.json"};
    });
  }

  TrialCurves load_curves(std::uint64_t seed) {
    TrialCurves curves;
    curves.label = "seed " + std::to_string(seed);
    auto original = read_report(round_dir(c_, seed, 0) / "report.json");
    for (int r = 0; r <= c_.rounds; ++r) {
      const fs::path dir = round_dir(c_, seed, r);
      auto report = r == 0 ? original : read_report(dir / "report.json");
      auto metrics = ojson::parse(read_file(dir / "metrics.json"));
      const double fraction = metrics.at("fraction_remaining").get<double>();
      curves.summaries.push_back(
          summarize(report, dataset().index(), metrics.at("accuracy").get<double>(), fraction, r));
      if (r > 0) {
        curves.consistency.push_back(compare_reports(original, report, fraction, r, c_.retained_denominator));
      }
    }
    return curves;
  }

  void stage_report(std::uint64_t seed) {
    const std::string name = trial_name(seed) + "/report";
    std::vector<std::string> deps = {"data"};
    for (int r = 0; r <= c_.rounds; ++r) deps.push_back(round_stage("dissect", seed, r));
    auto j = ojson::parse(c_.to_json());
    const std::string material = json_text(j["evaluation"]) + "rounds=" + std::to_string(c_.rounds);
    const fs::path dir = trial_dir(c_, seed);
    stage(name, deps, material, [&] {
      auto curves = load_curves(seed);
      std::vector<fs::path> files;
      for (const auto& cr : curves.consistency) {
        ojson rec;
        rec["round"] = cr.round;
        rec["fraction_remaining"] = cr.fraction_remaining;
        rec["denominator"] = c_.retained_denominator == RetainedDenominator::Original ? "original" : "pruned";
        rec["retained_fraction"] = cr.retained_fraction;
        rec["retained_degenerate"] = cr.retained_degenerate;
        rec["same_concept_fraction"] = cr.same_concept_fraction;
        rec["same_concept_degenerate"] = cr.same_concept_degenerate;
        rec["original_interpretable"] = cr.original_interpretable;
        rec["pruned_interpretable"] = cr.pruned_interpretable;
        rec["shared_interpretable"] = cr.shared_interpretable;
        const fs::path p = round_dir(c_, seed, cr.round) / "consistency.json";
        write_file_atomic(p, rec.dump(2) + "\n");
        files.push_back(p);
      }
      const fs::path figs = dir / "figures";
      emit_curves(curves.summaries, curves.consistency, dataset().index().categories(), figs);
      // The tidy tables live next to the rounds; figures keep their own folder.
      fs::rename(figs / "interpretability.csv", dir / "interpretability.csv");
      fs::rename(figs / "consistency.csv", dir / "consistency.csv");
      files.push_back(dir / "interpretability.csv");
      files.push_back(dir / "consistency.csv");
      for (const auto& f : files_under(figs)) files.push_back(f);
      return files;
    });
  }

  void stage_aggregate() {
    std::vector<std::string> deps;
    for (auto seed : c_.seeds) deps.push_back(trial_name(seed) + "/report");
    const fs::path dir = c_.output_root / "figures";
    stage("aggregate", deps, "figures", [&] {
      std::vector<TrialCurves> trials;
      for (auto seed : c_.seeds) trials.push_back(load_curves(seed));
      fs::remove_all(dir);
      fs::create_directories(dir);
      write_figures(trials, dataset().index().categories(), dir);
      return files_under(dir);
    });
  }

  const ExperimentConfig& c_;
  const RunOptions& opt_;
  fs::path state_path_;
  std::map<std::string, StageRecord> state_;
  std::set<std::string> ran_;
  RunSummary summary_;
  std::optional<ConceptDataset> dataset_;
  std::optional<ClassificationSet> train_set_;
  std::optional<ClassificationSet> eval_set_;
};

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  return Pipeline(config, options).run();
}

}  // namespace prunescope
