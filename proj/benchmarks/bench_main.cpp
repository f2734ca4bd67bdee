#include <benchmark/benchmark.h>

#include <random>

#include "prunescope/dissector.hpp"
#include "prunescope/kernels.hpp"
#include "prunescope/micro_broden.hpp"
#include "prunescope/pruner.hpp"
#include "prunescope/resnet.hpp"

using namespace prunescope;

namespace {

void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::vector<float> a(static_cast<std::size_t>(n) * n), b(a.size()), c(a.size());
  for (auto& v : a) v = static_cast<float>(uniform01(rng));
  for (auto& v : b) v = static_cast<float>(uniform01(rng));
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_ForwardDeskModel(benchmark::State& state) {
  ModelSpec spec;
  spec.widths = {8, 16, 32};
  spec.blocks = {1, 1, 1};
  auto net = build_model(spec, 1);
  const int batch = static_cast<int>(state.range(0));
  Tensor x({batch, 3, 16, 16}, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardDeskModel)->Arg(32)->Arg(128);

void BM_MagnitudePrune(benchmark::State& state) {
  ModelSpec spec;
  spec.widths = {16, 32, 64};
  auto net = build_model(spec, 2);
  auto mask = PruningMask::full(net.state());
  for (auto _ : state) benchmark::DoNotOptimize(schedule_prune(net.state(), mask, PruneConfig{}));
  state.SetItemsProcessed(state.iterations() * mask.total());
}
BENCHMARK(BM_MagnitudePrune);

void BM_DatasetIou(benchmark::State& state) {
  MicroBrodenSpec spec;
  spec.splits = {{"dissect", 200}};
  const auto dataset = render_micro_broden(spec);
  const auto positions = dataset.split_positions("dissect");
  std::mt19937_64 rng(3);
  UnitActivations acts{4, 4, {}};
  for (std::size_t i = 0; i < positions.size(); ++i) {
    std::vector<float> m(16);
    for (auto& v : m) v = static_cast<float>(uniform01(rng));
    acts.maps.push_back(std::move(m));
  }
  const int concept_id = dataset.index().find("blue").value();
  for (auto _ : state) benchmark::DoNotOptimize(dataset_iou(acts, {0, 0.9, 0}, dataset, positions, concept_id));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(positions.size()) * 256);
}
BENCHMARK(BM_DatasetIou);

}  // namespace

BENCHMARK_MAIN();
