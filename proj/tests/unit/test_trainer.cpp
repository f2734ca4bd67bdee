#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "prunescope/errors.hpp"
#include "prunescope/resnet.hpp"
#include "prunescope/trainer.hpp"
#include "support.hpp"

using namespace prunescope;
using prunescope::testing::random_tensor;
using prunescope::testing::TempDir;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.input_height = s.input_width = 8;
  s.widths = {4, 6};
  s.blocks = {1, 1};
  s.num_classes = 3;
  return s;
}

ClassificationSet toy_data(std::uint64_t seed, int n = 24) {
  std::mt19937_64 rng(seed);
  ClassificationSet d{random_tensor(rng, {n, 3, 8, 8}), {}};
  for (int i = 0; i < n; ++i) d.labels.push_back(i % 3);
  return d;
}

TrainingSchedule short_schedule(int epochs = 3) {
  TrainingSchedule s;
  s.epochs = epochs;
  s.decay_epochs = {};
  if (epochs > 2) s.decay_epochs = {2};
  s.batch_size = 8;
  s.seed = 11;
  return s;
}

}  // namespace

TEST(LearningRate, ReferenceScheduleValues) {
  TrainingSchedule s;
  s.epochs = 182;
  s.initial_lr = 0.1;
  s.decay_factor = 10.0;
  s.decay_epochs = {91, 136};
  EXPECT_DOUBLE_EQ(learning_rate_at(s, 0), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(s, 100), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate_at(s, 150), 0.001);
  EXPECT_DOUBLE_EQ(learning_rate_at(s, 90), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(s, 91), 0.01);
  EXPECT_THROW(learning_rate_at(s, -1), DomainError);
  EXPECT_THROW(learning_rate_at(s, 182), DomainError);
}

TEST(TrainingSchedule, Validation) {
  TrainingSchedule s;
  s.decay_epochs = {9, 6};
  EXPECT_THROW(s.validate(), DomainError);
  s.decay_epochs = {6, 12};
  EXPECT_THROW(s.validate(), DomainError);
  s = TrainingSchedule{};
  s.initial_lr = 0.0;
  EXPECT_THROW(s.validate(), DomainError);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  auto net = build_model(tiny_spec(), 1);
  const auto before = net.state();
  auto result = train(net, toy_data(1), short_schedule(0));
  EXPECT_TRUE(bit_equal(net.state(), before));
  ASSERT_EQ(result.series.size(), 1u);
  EXPECT_EQ(result.series.first_epoch(), 0);
  EXPECT_TRUE(bit_equal(result.series.at(0).weights, before));
}

TEST(Train, DeterministicAcrossRuns) {
  auto a = build_model(tiny_spec(), 2);
  auto b = build_model(tiny_spec(), 2);
  auto ra = train(a, toy_data(2), short_schedule());
  auto rb = train(b, toy_data(2), short_schedule());
  ASSERT_EQ(ra.series.size(), rb.series.size());
  for (std::size_t i = 0; i < ra.series.size(); ++i) {
    EXPECT_TRUE(bit_equal(ra.series.snapshots()[i].weights, rb.series.snapshots()[i].weights));
    EXPECT_TRUE(bit_equal(ra.series.snapshots()[i].momentum, rb.series.snapshots()[i].momentum));
  }
}

TEST(Train, RestoringACheckpointReplaysBitExactly) {
  auto net = build_model(tiny_spec(), 3);
  const auto data = toy_data(3);
  const auto schedule = short_schedule(3);
  auto full = train(net, data, schedule);

  auto resumed = build_model(tiny_spec(), 99);
  const auto& snap = full.series.at(1);
  resumed.load_state(snap.weights);
  TrainOptions options;
  options.start_epoch = 1;
  options.initial_momentum = &snap.momentum;
  train(resumed, data, schedule, options);
  EXPECT_TRUE(bit_equal(resumed.state(), net.state()));
}

TEST(Train, LrTraceFollowsSchedule) {
  auto net = build_model(tiny_spec(), 4);
  const auto schedule = short_schedule(4);
  auto result = train(net, toy_data(4), schedule);
  ASSERT_EQ(result.lr_trace.size(), 4u * 3u);  // 24 examples, batch 8
  for (const auto& r : result.lr_trace) EXPECT_EQ(r.lr, learning_rate_at(schedule, r.epoch));
}

TEST(Train, MaskedPositionsStayZeroInEverySnapshot) {
  auto net = build_model(tiny_spec(), 5);
  auto mask = PruningMask::full(net.state());
  auto& fc = mask.entry("fc.weight").keep;
  std::fill(fc.begin(), fc.end(), 0);  // drop a tensor entirely
  auto& conv = mask.entry("stem.conv.weight").keep;
  for (std::size_t i = 0; i < conv.size(); i += 2) conv[i] = 0;
  mask.apply(net.state());
  TrainOptions options;
  options.mask = &mask;
  auto result = train(net, toy_data(5), short_schedule(), options);
  for (const auto& s : result.series.snapshots()) EXPECT_TRUE(mask.is_applied_to(s.weights)) << "epoch " << s.epoch;
  for (float v : net.state().at("fc.weight").data) EXPECT_EQ(v, 0.0f);
}

TEST(Train, NonFiniteLossReportsEpoch) {
  auto net = build_model(tiny_spec(), 6);
  auto data = toy_data(6);
  // batch norm and ReLU can swallow a NaN pixel; a NaN classifier weight reaches the loss
  net.state().at("fc.weight").data[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(net, data, short_schedule());
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(FinetuneStandard, ZeroEpochsIsNoOp) {
  auto net = build_model(tiny_spec(), 7);
  const auto before = net.state();
  auto mask = PruningMask::full(net.state());
  finetune_standard(net, toy_data(7), mask, 0, short_schedule());
  EXPECT_TRUE(bit_equal(net.state(), before));
}

TEST(FinetuneStandard, UsesFinalLearningRate) {
  auto net = build_model(tiny_spec(), 8);
  auto mask = PruningMask::full(net.state());
  const auto schedule = short_schedule(3);
  auto result = finetune_standard(net, toy_data(8), mask, 2, schedule);
  ASSERT_FALSE(result.lr_trace.empty());
  for (const auto& r : result.lr_trace) EXPECT_EQ(r.lr, learning_rate_at(schedule, schedule.epochs - 1));
}

TEST(CheckpointSeries, SaveLoadAndTamperDetection) {
  TempDir dir;
  auto net = build_model(tiny_spec(), 9);
  TrainOptions options;
  options.checkpoint_dir = dir.path();
  options.spec_hash = tiny_spec().hash();
  auto result = train(net, toy_data(9), short_schedule(2), options);
  auto loaded = CheckpointSeries::load(dir.path());
  ASSERT_EQ(loaded.size(), 3u);
  for (int e = 0; e <= 2; ++e) {
    EXPECT_TRUE(bit_equal(loaded.at(e).weights, result.series.at(e).weights));
    EXPECT_EQ(loaded.at(e).rng, result.series.at(e).rng);
  }
  {
    std::ofstream out(dir / "epoch_1/model.bin", std::ios::binary | std::ios::app);
    out << "junk";
  }
  EXPECT_THROW(CheckpointSeries::load(dir.path()), DataError);
}

TEST(CheckpointSeries, MustBeContiguous) {
  CheckpointSeries s;
  s.append(Snapshot{0, {}, {}, {1, 0}});
  EXPECT_THROW(s.append(Snapshot{2, {}, {}, {1, 2}}), DomainError);
  EXPECT_THROW(s.at(5), LookupError);
}

TEST(RngState, EpochOrderIsAPermutationFixedBySeedAndEpoch) {
  RngState a{3, 4}, b{3, 4}, c{3, 5};
  auto pa = a.epoch_order(50);
  EXPECT_EQ(pa, b.epoch_order(50));
  EXPECT_NE(pa, c.epoch_order(50));
  auto sorted = pa;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(RngState::decode(a.encode()), a);
}
