#include <benchmark/benchmark.h>

#include "voc/gridworld.hpp"
#include "voc/rng.hpp"
#include "voc/trajectory.hpp"

namespace {

voc::GridWorld bench_env() {
  voc::GridWorld env;
  env.width = 5;
  env.height = 5;
  env.agent_pos = {0, 0};
  env.goal_pos = {4, 4};
  env.slip_prob = 0.1;
  env.h_px = 40;
  env.w_px = 40;
  env.episodic = false;
  return env;
}

void BM_RngUniform(benchmark::State& state) {
  voc::Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(rng.uniform());
}
BENCHMARK(BM_RngUniform);

void BM_GridStep(benchmark::State& state) {
  voc::GridWorld env = bench_env();
  voc::Rng rng(1);
  for (auto _ : state) {
    auto res = voc::step(env, static_cast<int>(rng.uniform_int(4)), rng);
    env = res.env;
    benchmark::DoNotOptimize(env);
  }
}
BENCHMARK(BM_GridStep);

void BM_Render(benchmark::State& state) {
  voc::GridWorld env = bench_env();
  for (auto _ : state) benchmark::DoNotOptimize(voc::render(env));
}
BENCHMARK(BM_Render);

void BM_GenerateDataset(benchmark::State& state) {
  voc::GridWorld env = bench_env();
  for (auto _ : state) {
    benchmark::DoNotOptimize(voc::generate_dataset(env, voc::Policy::uniform_random(), 10, 20, 3));
  }
}
BENCHMARK(BM_GenerateDataset);

void BM_DatasetSerialize(benchmark::State& state) {
  voc::Dataset ds =
      voc::generate_dataset(bench_env(), voc::Policy::uniform_random(), 50, 20, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ds.serialize());
}
BENCHMARK(BM_DatasetSerialize);

}  // namespace

BENCHMARK_MAIN();
