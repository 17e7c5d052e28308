#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "ame/checkpoint.hpp"
#include "ame/engine.hpp"
#include "ame/rng.hpp"
#include "ame/synthlab.hpp"

namespace {

using namespace ame;

WeightMap random_model(Rng& rng, std::size_t elements) {
  std::vector<Tensor> ts;
  const std::size_t per = elements / 4;
  for (int i = 0; i < 4; ++i) {
    Tensor t{"layer." + std::to_string(i) + ".weight", Dtype::F32,
             {static_cast<std::int64_t>(per)}, std::vector<double>(per)};
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    ts.push_back(std::move(t));
  }
  return WeightMap(std::move(ts));
}

std::vector<Ingredient> ingredients(std::size_t n, std::size_t elements) {
  Rng rng(1, 0);
  std::vector<Ingredient> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"m" + std::to_string(i), random_model(rng, elements), {}});
  return out;
}

void BM_Soup(benchmark::State& state) {
  auto ings = ingredients(static_cast<std::size_t>(state.range(0)), 1 << 16);
  std::vector<WeightMap> maps;
  for (const auto& i : ings) maps.push_back(i.weights);
  for (auto _ : state) benchmark::DoNotOptimize(soup(maps));
  state.SetItemsProcessed(state.iterations() * state.range(0) * (1 << 16));
}
BENCHMARK(BM_Soup)->Arg(4)->Arg(16);

void BM_EnsembleEpoch(benchmark::State& state) {
  auto ings = ingredients(8, 1 << 16);
  EnsembleConfig cfg;
  cfg.ordering = Ordering::GivenOrder;
  cfg.batch_size = 2;
  switch (state.range(0)) {
    case 0: cfg.optimizer = OptimizerSpec::gd(Schedule::harmonic(1)); break;
    case 1: cfg.optimizer = OptimizerSpec::adagrad(Schedule::constant(0.01), 1e-10); break;
    case 2: cfg.optimizer = OptimizerSpec::adam(Schedule::constant(1e-3), 0.9, 0.999, 1e-8); break;
    default: cfg.optimizer = OptimizerSpec::adadelta(Schedule::constant(1.0), 0.9, 1e-6); break;
  }
  state.SetLabel(std::string(cfg.optimizer.name()));
  for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(cfg, ings));
}
BENCHMARK(BM_EnsembleEpoch)->DenseRange(0, 3);

void BM_CheckpointEncode(benchmark::State& state) {
  Rng rng(2, 0);
  auto m = random_model(rng, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(encode_checkpoint(m));
  state.SetBytesProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_CheckpointEncode)->Arg(1 << 12)->Arg(1 << 20);

void BM_CheckpointDecode(benchmark::State& state) {
  Rng rng(3, 0);
  auto bytes = encode_checkpoint(random_model(rng, static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(decode_checkpoint(bytes));
  state.SetBytesProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_CheckpointDecode)->Arg(1 << 12)->Arg(1 << 20);

void BM_CycleCounterexample(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(cycle_counterexample(1.0, 1.0, 2500));
}
BENCHMARK(BM_CycleCounterexample);

}  // namespace

BENCHMARK_MAIN();
