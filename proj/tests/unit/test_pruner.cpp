#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <tuple>

#include "prunescope/errors.hpp"
#include "prunescope/pruner.hpp"
#include "prunescope/resnet.hpp"
#include "support.hpp"

using namespace prunescope;
using prunescope::testing::random_tensor;
using prunescope::testing::TempDir;

namespace {

using Position = std::pair<std::string, std::size_t>;

// Random prunable tensors whose values are drawn from a small grid so that
// equal magnitudes (ties, including +w/-w) are common.
NamedTensorSet random_weights(std::mt19937_64& rng, int max_total) {
  NamedTensorSet w;
  const int tensors = 1 + static_cast<int>(rng() % 4);
  int budget = max_total;
  for (int t = 0; t < tensors && budget > 0; ++t) {
    const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::min(budget, max_total / tensors)));
    budget -= n;
    Tensor x({n});
    const int levels = 1 + static_cast<int>(rng() % 40);
    for (auto& v : x.data) v = static_cast<float>(static_cast<int>(rng() % (2 * levels + 1)) - levels) / 8.0f;
    w.add("layer" + std::to_string(t) + ".weight", t % 2 ? TensorRole::LinearWeight : TensorRole::ConvWeight, x);
  }
  w.add("norm.weight", TensorRole::NormScale, Tensor({3}, 1.0f));
  return w;
}

// Full sort of every kept position by (|w|, tensor name, flat index).
std::set<Position> oracle_drop(const NamedTensorSet& w, const PruningMask& mask, const std::vector<std::string>& group,
                               std::int64_t count) {
  std::vector<std::tuple<float, std::string, std::size_t>> all;
  for (const auto& name : group) {
    const auto& keep = mask.entry(name).keep;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i]) all.emplace_back(std::fabs(w.at(name).data[i]), name, i);
    }
  }
  std::sort(all.begin(), all.end());
  std::set<Position> out;
  for (std::int64_t i = 0; i < count && i < static_cast<std::int64_t>(all.size()); ++i) {
    out.emplace(std::get<1>(all[i]), std::get<2>(all[i]));
  }
  return out;
}

std::set<Position> dropped_between(const PruningMask& before, const PruningMask& after) {
  std::set<Position> out;
  for (const auto& [name, e] : before.entries()) {
    for (std::size_t i = 0; i < e.keep.size(); ++i) {
      if (e.keep[i] && !after.entry(name).keep[i]) out.emplace(name, i);
    }
  }
  return out;
}

// Zeroes a random subset of positions and returns the matching mask.
PruningMask random_premask(std::mt19937_64& rng, NamedTensorSet& w) {
  auto mask = PruningMask::full(w);
  for (auto& [name, e] : mask.entries()) {
    for (std::size_t i = 0; i < e.keep.size(); ++i) {
      if (rng() % 5 == 0) mask.entry(name).keep[i] = 0;
    }
  }
  mask.apply(w);
  return mask;
}

ModelSpec desk_spec() {
  ModelSpec s;
  s.widths = {8, 16, 32};
  s.blocks = {1, 1, 1};
  return s;
}

}  // namespace

TEST(MagnitudePrune, GlobalMatchesFullSortOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto w = random_weights(rng, 10000);
    auto mask = random_premask(rng, w);
    if (mask.kept() < 2) continue;
    PruneConfig config{0.2, PruneScope::Global};
    auto out = magnitude_prune(w, mask, config);
    std::vector<std::string> names;
    for (const auto& [name, e] : mask.entries()) names.push_back(name);
    const auto count = static_cast<std::int64_t>(std::floor(0.2 * static_cast<double>(mask.kept())));
    EXPECT_EQ(dropped_between(mask, out), oracle_drop(w, mask, names, count)) << "trial " << trial;
    EXPECT_EQ(out.kept(), mask.kept() - count);
    EXPECT_TRUE(out.is_subset_of(mask));
    EXPECT_EQ(out.round(), mask.round() + 1);
  }
}

TEST(MagnitudePrune, PerLayerMatchesOracle) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    auto w = random_weights(rng, 3000);
    auto mask = random_premask(rng, w);
    PruneConfig config{0.3, PruneScope::PerLayer};
    if (mask.kept() == 0) continue;
    PruningMask out;
    try {
      out = magnitude_prune(w, mask, config);
    } catch (const ScheduleExhaustedError&) {
      continue;
    }
    std::set<Position> expected;
    for (const auto& [name, e] : mask.entries()) {
      const auto kept = std::count(e.keep.begin(), e.keep.end(), 1);
      auto part = oracle_drop(w, mask, {name}, static_cast<std::int64_t>(std::floor(0.3 * static_cast<double>(kept))));
      expected.insert(part.begin(), part.end());
    }
    EXPECT_EQ(dropped_between(mask, out), expected);
  }
}

TEST(MagnitudePrune, OnlyPrunableTensorsAreMasked) {
  std::mt19937_64 rng(5);
  auto w = random_weights(rng, 100);
  auto mask = PruningMask::full(w);
  EXPECT_FALSE(mask.covers("norm.weight"));
}

TEST(MagnitudePrune, RejectsUnappliedMask) {
  std::mt19937_64 rng(6);
  auto w = random_weights(rng, 200);
  auto mask = PruningMask::full(w);
  mask.entry(mask.entries().begin()->first).keep[0] = 0;
  w.at(mask.entries().begin()->first).data[0] = 1.0f;
  EXPECT_THROW(magnitude_prune(w, mask, PruneConfig{}), DomainError);
}

TEST(MagnitudePrune, ExhaustionIsReported) {
  NamedTensorSet w;
  w.add("a.weight", TensorRole::LinearWeight, Tensor({1}, 1.0f));
  auto mask = PruningMask::full(w);
  mask.entry("a.weight").keep[0] = 0;
  w.at("a.weight").data[0] = 0.0f;
  EXPECT_THROW(magnitude_prune(w, mask, PruneConfig{}), ScheduleExhaustedError);
  EXPECT_THROW(PruneConfig({1.0, PruneScope::Global}).validate(), DomainError);
}

TEST(SchedulePrune, StaysWithinOneWeightOfGeometricSchedule) {
  auto net = build_model(desk_spec(), 1);
  auto w = net.state();
  auto mask = PruningMask::full(w);
  const auto total = mask.total();
  std::mt19937_64 rng(3);
  for (int r = 1; r <= 14; ++r) {
    mask = schedule_prune(w, mask, PruneConfig{});
    mask.apply(w);
    // perturb survivors as retraining would
    for (auto& [name, t] : w) {
      if (!mask.covers(name)) continue;
      for (auto& v : t.value.data) {
        if (v != 0.0f) v += static_cast<float>(static_cast<int>(rng() % 11) - 5) * 1e-3f;
      }
    }
    mask.apply(w);
    const double expected = std::pow(0.8, r) * static_cast<double>(total);
    EXPECT_LE(std::fabs(static_cast<double>(mask.kept()) - expected), 1.0) << "round " << r;
  }
  EXPECT_NEAR(sparsity_after_rounds(8), 0.16777216, 1e-12);
  EXPECT_NEAR(sparsity_after_rounds(10), 0.1073741824, 1e-12);
}

TEST(SchedulePrune, DropsSmallestMagnitudes) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = random_weights(rng, 2000);
    auto mask = PruningMask::full(w);
    auto out = schedule_prune(w, mask, PruneConfig{});
    std::vector<std::string> names;
    for (const auto& [name, e] : mask.entries()) names.push_back(name);
    EXPECT_EQ(dropped_between(mask, out), oracle_drop(w, mask, names, mask.kept() - out.kept()));
  }
}

TEST(Mask, PersistenceRoundTripAndTamper) {
  TempDir dir;
  std::mt19937_64 rng(4);
  auto w = random_weights(rng, 500);
  auto parent = PruningMask::full(w);
  auto mask = magnitude_prune(w, parent, PruneConfig{});
  write_mask(dir / "mask", mask, MaskProvenance{"cfg", parent.hash()});
  MaskProvenance prov;
  auto back = read_mask(dir / "mask", &prov);
  EXPECT_EQ(back, mask);
  EXPECT_EQ(back.hash(), mask.hash());
  EXPECT_EQ(prov.config_hash, "cfg");
  EXPECT_EQ(prov.parent_hash, parent.hash());
  EXPECT_EQ(back.round(), 1);

  const auto bits = dir / "mask" / (mask.entries().begin()->first + ".bits");
  std::string bytes;
  {
    std::ifstream in(bits, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes.back() = static_cast<char>(bytes.back() ^ 0x01);
  std::ofstream(bits, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_THROW(read_mask(dir / "mask"), DataError);
}

class RewindTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spec_.input_height = spec_.input_width = 8;
    spec_.widths = {4, 6};
    spec_.blocks = {1, 1};
    spec_.num_classes = 3;
    std::mt19937_64 rng(12);
    data_ = ClassificationSet{random_tensor(rng, {24, 3, 8, 8}), {}};
    for (int i = 0; i < 24; ++i) data_.labels.push_back(i % 3);
    schedule_.epochs = 4;
    schedule_.decay_epochs = {2};
    schedule_.batch_size = 8;
    schedule_.seed = 21;
    net_ = std::make_unique<Network>(build_model(spec_, 21));
    series_ = train(*net_, data_, schedule_).series;
  }

  static ModelSpec spec_;
  static ClassificationSet data_;
  static TrainingSchedule schedule_;
  static std::unique_ptr<Network> net_;
  static CheckpointSeries series_;
};

ModelSpec RewindTest::spec_;
ClassificationSet RewindTest::data_;
TrainingSchedule RewindTest::schedule_;
std::unique_ptr<Network> RewindTest::net_;
CheckpointSeries RewindTest::series_;

TEST_F(RewindTest, KeptWeightsMatchSnapshotBitExactly) {
  auto mask = magnitude_prune(net_->state(), PruningMask::full(net_->state()), PruneConfig{0.5, PruneScope::Global});
  auto model = rewind(series_, 1, mask, *net_);
  const auto& snap = series_.at(1).weights;
  for (const auto& [name, t] : model.net.state()) {
    const auto& ref = snap.at(name);
    for (std::size_t i = 0; i < t.value.data.size(); ++i) {
      const bool dropped = mask.covers(name) && !mask.entry(name).keep[i];
      if (dropped) {
        EXPECT_EQ(t.value.data[i], 0.0f);
      } else {
        EXPECT_EQ(std::memcmp(&t.value.data[i], &ref.data[i], sizeof(float)), 0) << name << "[" << i << "]";
      }
    }
  }
  EXPECT_TRUE(mask.is_applied_to(model.momentum));
  EXPECT_THROW(rewind(series_, 9, mask, *net_), LookupError);
}

TEST_F(RewindTest, FullReplayWithAllOnesMaskReproducesFinalCheckpoint) {
  auto mask = PruningMask::full(net_->state());
  auto model = rewind(series_, 1, mask, *net_);
  replay(model, mask, data_, schedule_);
  EXPECT_TRUE(bit_equal(model.net.state(), series_.at(schedule_.epochs).weights));
}

TEST_F(RewindTest, AbbreviatedReplayStopsEarly) {
  auto mask = PruningMask::full(net_->state());
  auto model = rewind(series_, 1, mask, *net_);
  auto result = replay(model, mask, data_, schedule_, 1);
  EXPECT_EQ(result.series.last_epoch(), 2);
  EXPECT_TRUE(bit_equal(model.net.state(), series_.at(2).weights));
}

TEST_F(RewindTest, IterativeRoundsNestAndKeepMasksApplied) {
  IterateOptions options;
  options.rewind_epoch = 1;
  auto rounds = iterate_prune(*net_, series_, data_, schedule_, PruneConfig{}, 3, options);
  ASSERT_EQ(rounds.size(), 3u);
  const auto total = rounds[0].mask.total();
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    EXPECT_EQ(rounds[r].round, static_cast<int>(r) + 1);
    EXPECT_TRUE(rounds[r].mask.is_applied_to(rounds[r].net.state()));
    EXPECT_LE(std::fabs(static_cast<double>(rounds[r].mask.kept()) - std::pow(0.8, r + 1) * total), 1.0);
    if (r > 0) EXPECT_TRUE(rounds[r].mask.is_subset_of(rounds[r - 1].mask));
  }

  options.mode = RetrainMode::StandardFinetune;
  options.finetune_epochs = 1;
  auto tuned = iterate_prune(*net_, series_, data_, schedule_, PruneConfig{}, 2, options);
  EXPECT_TRUE(tuned[1].mask.is_applied_to(tuned[1].net.state()));
}
