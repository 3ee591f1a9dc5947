// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "microforge/sweeps.hpp"

using namespace microforge;

namespace {

sweeps::Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? sweeps::Exec::Serial : sweeps::Exec::Parallel;
}

void BM_SwellCurve(benchmark::State& state) {
  const Config cfg;
  const auto grid = sweeps::make_grid(0.0, 1.0, 1e-4);
  for (auto _ : state) benchmark::DoNotOptimize(sweeps::swell_curve(*cfg.world->gel, grid, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.size()));
}
BENCHMARK(BM_SwellCurve)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMillisecond);

void BM_TransitionCurve(benchmark::State& state) {
  const Config cfg;
  const auto grid = sweeps::make_grid(0.0, 300.0, 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(sweeps::transition_curve(*cfg.world, grid, 12.0, exec_of(state)));
}
BENCHMARK(BM_TransitionCurve)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMillisecond);

void BM_BilayerRatio(benchmark::State& state) {
  const Config cfg;
  const auto grid = sweeps::make_grid(0.05, 10.0, 0.001);
  for (auto _ : state) benchmark::DoNotOptimize(sweeps::bilayer_ratio(cfg.world->gripper.left, grid, exec_of(state)));
}
BENCHMARK(BM_BilayerRatio)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMillisecond);

void BM_MomentBatch(benchmark::State& state) {
  const Config cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        sweeps::moment_batch(*cfg.world, world::BodyKind::Type1Base, 64, 7, 1.0, 0.2, exec_of(state)));
}
BENCHMARK(BM_MomentBatch)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
