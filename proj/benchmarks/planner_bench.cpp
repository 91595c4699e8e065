#include <benchmark/benchmark.h>

#include "pipesim/fixtures.hpp"
#include "pipesim/planner.hpp"

using namespace pipesim;

static void BM_PlanSweep(benchmark::State& state) {
    const auto model = fixture_uniform_model(8);
    const auto cluster = fixture_cluster(static_cast<int>(state.range(0)), 8);
    const long long max_batch = 64 * state.range(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(plan(model, cluster, max_batch));
    }
}
BENCHMARK(BM_PlanSweep)->Arg(8)->Arg(16)->Arg(64);

static void BM_Simulate2bw(benchmark::State& state) {
    const auto model = fixture_uniform_model(4);
    const auto cluster = fixture_cluster(4, 8);
    ParallelConfig cfg;
    cfg.depth = 4;
    cfg.grad_accum = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            simulate_policy(PipelinePolicy::TwoBW, model, cluster, cfg, 10));
    }
}
BENCHMARK(BM_Simulate2bw)->Arg(1)->Arg(4)->Arg(16);

BENCHMARK_MAIN();
