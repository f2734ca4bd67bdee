#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "prunescope/experiment.hpp"
#include "support.hpp"

using namespace prunescope;
using prunescope::testing::TempDir;

namespace {

std::string tiny_config(const std::filesystem::path& out, int rounds) {
  return R"({
  "schema_version": 1,
  "output_root": ")" + out.string() + R"(",
  "seeds": [3],
  "rounds": )" + std::to_string(rounds) + R"(,
  "data": {"generate": {"splits": {"train": 40, "val": 20, "dissect": 12}, "seed": 5}},
  "model": {"widths": [4, 8], "blocks": [1, 1]},
  "training": {"epochs": 3, "decay_epochs": [2], "batch_size": 16},
  "pruning": {"rewind_epoch": 1},
  "dissection": {"batch_size": 8}
})";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const ConfigError& e, const std::string& needle) {
  return std::any_of(e.problems().begin(), e.problems().end(),
                     [&](const std::string& p) { return p.find(needle) != std::string::npos; });
}

template <typename F>
ConfigError config_error(F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError";
  return ConfigError({});
}

// Every file under `root` except the run state, keyed by relative path.
std::map<std::string, std::string> outputs(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).generic_string();
    if (rel == "state.json" || rel == "config.json") continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST(Config, DefaultsFillEverything) {
  auto c = parse_config(R"({"schema_version": 1, "output_root": "x"})", "/base");
  EXPECT_EQ(c.rounds, 14);
  EXPECT_EQ(c.output_root, std::filesystem::path("/base/x"));
  EXPECT_EQ(c.dissection.quantile, 0.995);
  EXPECT_EQ(c.dissection.iou_threshold, 0.05);
  EXPECT_EQ(c.pruning.fraction, 0.2);
  // the expanded form parses back to itself
  auto again = parse_config(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
}

TEST(Config, RejectsZeroRounds) {
  auto e = config_error([] { parse_config(R"({"schema_version": 1, "rounds": 0})"); });
  EXPECT_TRUE(mentions(e, "rounds")) << e.what();
}

TEST(Config, RejectsRewindPastTraining) {
  auto e = config_error([] {
    parse_config(R"({"schema_version": 1, "training": {"epochs": 4, "decay_epochs": [2]},
                     "pruning": {"rewind_epoch": 9}})");
  });
  EXPECT_TRUE(mentions(e, "pruning.rewind_epoch")) << e.what();
}

TEST(Config, ReportsParseErrorLocation) {
  auto e = config_error([] { parse_config("{\n  \"rounds\": ,\n}"); });
  EXPECT_TRUE(mentions(e, "line 2")) << e.what();
}

TEST(Config, NamesUnknownFieldsAndTypeErrors) {
  auto e = config_error([] {
    parse_config(R"({"schema_version": 1, "model": {"widht": [4]}, "training": {"epochs": "ten"}})");
  });
  EXPECT_TRUE(mentions(e, "model.widht")) << e.what();
  EXPECT_TRUE(mentions(e, "training.epochs")) << e.what();
}

TEST(Config, RejectsWrongSchemaVersion) {
  auto e = config_error([] { parse_config(R"({"schema_version": 99})"); });
  EXPECT_TRUE(mentions(e, "schema_version")) << e.what();
}

TEST(Config, ReferenceConfigValidates) {
  auto c = validate_config(std::filesystem::path(prunescope::testing::configs_dir()) / "desk.json");
  EXPECT_GE(c.rounds, 12);
}

class TinyRun : public ::testing::Test {
 protected:
  TempDir dir{"run"};
  ExperimentConfig config(const std::string& sub, int rounds) const {
    return parse_config(tiny_config(dir / sub, rounds));
  }
};

TEST_F(TinyRun, ProducesReportsAndCachesEverything) {
  auto c = config("a", 1);
  auto first = run_experiment(c);
  EXPECT_FALSE(first.interrupted);
  EXPECT_GT(first.executed, 0);
  EXPECT_TRUE(std::filesystem::exists(round_dir(c, 3, 0) / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(round_dir(c, 3, 1) / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(round_dir(c, 3, 1) / "mask"));
  EXPECT_TRUE(std::filesystem::exists(trial_dir(c, 3) / "interpretability.csv"));
  EXPECT_TRUE(std::filesystem::exists(c.output_root / "figures" / "fig1_accuracy.svg"));

  auto second = run_experiment(c);
  EXPECT_EQ(second.executed, 0);
  EXPECT_EQ(second.skipped, first.executed);
}

TEST_F(TinyRun, DeterministicAndResumable) {
  auto a = config("a", 2), b = config("b", 2), c = config("c", 2);
  run_experiment(a);
  run_experiment(b);
  const auto oa = outputs(a.output_root);
  EXPECT_EQ(oa, outputs(b.output_root));

  RunOptions stop;
  stop.max_stages = 3;
  auto partial = run_experiment(c, stop);
  EXPECT_TRUE(partial.interrupted);
  EXPECT_EQ(partial.executed, 3);
  auto rest = run_experiment(c);
  EXPECT_FALSE(rest.interrupted);
  EXPECT_EQ(rest.skipped, 3);
  EXPECT_EQ(oa, outputs(c.output_root));
}

TEST_F(TinyRun, DeletedMaskRecomputesOnlyDownstreamRounds) {
  auto c = config("a", 3);
  run_experiment(c);
  const auto before = outputs(c.output_root);
  std::filesystem::remove_all(round_dir(c, 3, 2) / "mask");
  auto again = run_experiment(c);
  const auto& ran = again.executed_stages;
  auto has = [&](const std::string& s) { return std::find(ran.begin(), ran.end(), s) != ran.end(); };
  EXPECT_TRUE(has("trial_3/prune_2"));
  EXPECT_TRUE(has("trial_3/prune_3"));
  EXPECT_TRUE(has("trial_3/dissect_2"));
  EXPECT_TRUE(has("trial_3/dissect_3"));
  EXPECT_FALSE(has("data"));
  EXPECT_FALSE(has("trial_3/train"));
  EXPECT_FALSE(has("trial_3/prune_1"));
  EXPECT_FALSE(has("trial_3/dissect_0"));
  EXPECT_FALSE(has("trial_3/dissect_1"));
  EXPECT_EQ(before, outputs(c.output_root));
}

TEST_F(TinyRun, TargetStopsEarly) {
  auto c = config("a", 2);
  RunOptions o;
  o.target = "train";
  auto s = run_experiment(c, o);
  EXPECT_EQ(s.executed_stages, (std::vector<std::string>{"data", "trial_3/train"}));
  o.target = "prune:9";
  EXPECT_THROW(run_experiment(c, o), DomainError);
}
