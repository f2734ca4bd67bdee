// prunescope: train, iteratively prune, dissect and report.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 a stage failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "prunescope/experiment.hpp"
#include "prunescope/progress.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace prunescope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitStageFailure = 2;

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool quiet = false;
};

struct PruneFlags {
  std::optional<int> round;
  std::optional<double> fraction;
  std::optional<std::string> scope;
  std::optional<std::string> mode;
  std::optional<int> rewind_epoch;
};

// Config text with command-line overrides patched in, so the merged result
// goes through the same validation as a file.
ExperimentConfig load_config(const Globals& g, const PruneFlags& p) {
  ordered_json j;
  fs::path base;
  if (!g.config.empty()) {
    std::ifstream in(g.config, std::ios::binary);
    if (!in) throw ConfigError({g.config + ": cannot read file"});
    std::stringstream ss;
    ss << in.rdbuf();
    // Parse errors get the file name and location from parse_config.
    try {
      j = ordered_json::parse(ss.str());
    } catch (const nlohmann::json::parse_error&) {
      parse_config(ss.str());
    }
    base = fs::path(g.config).parent_path();
  } else {
    j = ordered_json::parse(ExperimentConfig{}.to_json());
  }
  if (!g.out.empty()) {
    j["output_root"] = fs::absolute(g.out).generic_string();
  }
  if (g.seed) j["seeds"] = {*g.seed};
  if (p.round && (!j.contains("rounds") || j["rounds"].get<int>() < *p.round)) j["rounds"] = *p.round;
  if (p.fraction) j["pruning"]["fraction"] = *p.fraction;
  if (p.scope) j["pruning"]["scope"] = *p.scope;
  if (p.mode) j["pruning"]["mode"] = *p.mode;
  if (p.rewind_epoch) j["pruning"]["rewind_epoch"] = *p.rewind_epoch;
  return parse_config(j.dump(), base);
}

int run_target(const Globals& g, const PruneFlags& p, const std::string& target, std::optional<int> stop_after) {
  ExperimentConfig config = load_config(g, p);
  RunOptions options;
  options.resume_training = g.resume;
  options.target = target;
  options.max_stages = stop_after;
  auto summary = run_experiment(config, options);
  log_progress({{"stage", "run"},
                {"status", summary.interrupted ? "interrupted" : "complete"},
                {"executed", std::to_string(summary.executed)},
                {"cached", std::to_string(summary.skipped)},
                {"out", config.output_root.generic_string()}});
  return summary.interrupted ? kExitStageFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative magnitude pruning and network dissection experiments"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Experiment configuration (JSON)");
  app.add_option("--out", g.out, "Output root; overrides output_root");
  app.add_option("--seed", g.seed, "Run a single trial with this seed");
  app.add_flag("--resume", g.resume, "Continue an interrupted training run from its last checkpoint");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress lines");

  PruneFlags prune_flags;
  int dissect_round = 0;
  std::optional<int> stop_after;

  auto* gen = app.add_subcommand("gen-data", "Generate the micro-Broden dataset");
  auto* train = app.add_subcommand("train", "Train the unpruned network of every trial");
  auto* prune = app.add_subcommand("prune", "Prune and retrain up to a round");
  prune->add_option("--round", prune_flags.round, "Last round to produce (default: config rounds)");
  prune->add_option("--fraction", prune_flags.fraction, "Fraction of remaining weights pruned per round");
  prune->add_option("--scope", prune_flags.scope, "global or per-layer")->check(CLI::IsMember({"global", "per-layer"}));
  prune->add_option("--mode", prune_flags.mode, "rewind or finetune")->check(CLI::IsMember({"rewind", "finetune"}));
  prune->add_option("--rewind-epoch", prune_flags.rewind_epoch, "Epoch whose weights survivors are reset to");
  auto* dissect = app.add_subcommand("dissect", "Dissect the network of one round");
  dissect->add_option("--round", dissect_round, "Round to dissect (0 = unpruned)");
  auto* report = app.add_subcommand("report", "Compute metrics, tables and figures (runs missing stages)");
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--stop-after", stop_after, "Stop after executing this many stages")->group("");
  auto* validate = app.add_subcommand("validate", "Check a configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  set_progress_enabled(!g.quiet);
  try {
    if (*validate) {
      if (g.config.empty()) throw ConfigError({"--config is required"});
      ExperimentConfig config = validate_config(g.config);
      std::cout << config.to_json();
      return kExitOk;
    }
    if (*gen) return run_target(g, {}, "data", std::nullopt);
    if (*train) return run_target(g, {}, "train", std::nullopt);
    if (*prune) {
      const std::string target = prune_flags.round ? "prune:" + std::to_string(*prune_flags.round) : "prune:" +
                                 std::to_string(load_config(g, prune_flags).rounds);
      return run_target(g, prune_flags, target, std::nullopt);
    }
    if (*dissect) return run_target(g, {}, "dissect:" + std::to_string(dissect_round), std::nullopt);
    if (*report) return run_target(g, {}, "report", std::nullopt);
    if (*run) return run_target(g, {}, "", stop_after);
  } catch (const ConfigError& e) {
    for (const auto& problem : e.problems()) std::cerr << "error: " << problem << "\n";
    return kExitInvalid;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitInvalid;
}
