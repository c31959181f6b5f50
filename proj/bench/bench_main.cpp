// SPDX-License-Identifier: Apache-2.0
//
// Serial vs OpenMP drivers for the hot kernels: fleet training, fleet
// prediction, and Monte Carlo critical values. The parallel paths produce
// bitwise-identical results, so the interesting question is throughput only.
//
// Run: ./emubound_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include "emubound/fleet.hpp"
#include "emubound/history_matching.hpp"
#include "emubound/synthetic.hpp"

using namespace emubound;

namespace {

SyntheticSpec bench_spec(int cells, int n_members) {
    SyntheticSpec spec;
    spec.space.dims = {{"a", 0.0, 1.0}, {"b", -1.0, 2.0}};
    spec.sim_grid.lat_origin = 0.0;
    spec.sim_grid.lat_step = 0.1;
    spec.sim_grid.lat_count = cells;
    spec.sim_grid.lon_count = 1;
    spec.sim_grid.time_count = 1;
    spec.sat_grid = spec.sim_grid;
    spec.u_star.values = {0.4, 0.7};
    spec.meas_var = 0.02;
    spec.n_members = n_members;
    spec.seed = 17;
    spec.model_seed = 5;
    return spec;
}

FleetConfig bench_config(int workers) {
    FleetConfig config;
    config.gp.restarts = 2;
    config.gp.max_iter = 40;
    config.gp.dim_ranges = {1.0, 3.0};
    config.seed = 99;
    config.workers = workers;
    return config;
}

void train_serial(benchmark::State& state) {
    auto data = generate(bench_spec(static_cast<int>(state.range(0)), 32));
    auto config = bench_config(1);
    for (auto _ : state) {
        auto fleet = train_fleet_serial(data.train, config);
        benchmark::DoNotOptimize(fleet.fitted_count());
    }
}

void train_openmp(benchmark::State& state) {
    auto data = generate(bench_spec(static_cast<int>(state.range(0)), 32));
    auto config = bench_config(static_cast<int>(state.range(1)));
    for (auto _ : state) {
        auto fleet = train_fleet_parallel(data.train, config);
        benchmark::DoNotOptimize(fleet.fitted_count());
    }
}

void predict_serial(benchmark::State& state) {
    auto spec = bench_spec(static_cast<int>(state.range(0)), 32);
    auto data = generate(spec);
    auto fleet = train_fleet_serial(data.train, bench_config(1));
    auto tests = sample_test_parameters(spec.space, 500, 7);
    for (auto _ : state) {
        auto table = predict_fleet_serial(fleet, tests);
        benchmark::DoNotOptimize(table.mean.sum());
    }
}

void predict_openmp(benchmark::State& state) {
    auto spec = bench_spec(static_cast<int>(state.range(0)), 32);
    auto data = generate(spec);
    auto fleet = train_fleet_serial(data.train, bench_config(1));
    auto tests = sample_test_parameters(spec.space, 500, 7);
    int workers = static_cast<int>(state.range(1));
    for (auto _ : state) {
        auto table = predict_fleet_parallel(fleet, tests, workers);
        benchmark::DoNotOptimize(table.mean.sum());
    }
}

void mc_critical(benchmark::State& state) {
    HMConfig config;
    config.q = 0.75;
    config.mc_samples = 20000;
    config.seed = 3;
    config.workers = static_cast<int>(state.range(1));
    int m = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(hm_critical(m, config));
    }
}

}  // namespace

BENCHMARK(train_serial)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(train_openmp)->Args({16, 2})->Args({32, 2})->Args({32, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(predict_serial)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(predict_openmp)->Args({32, 2})->Args({32, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(mc_critical)->Args({200, 1})->Args({200, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
