#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "rjump/control.hpp"
#include "rjump/riccati.hpp"
#include "rjump/simulator.hpp"

namespace {

rjump::SimConfig config(long paths, double dt) {
    rjump::SimConfig cfg;
    cfg.n_paths = paths;
    cfg.dt = dt;
    cfg.seed = 2024;
    cfg.x0 = rjump::Vector::Ones(1);
    return cfg;
}

void BM_simulate_open_loop(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    const auto cfg = config(state.range(0), 1e-3);
    const rjump::Policy zero = [](double, const rjump::Vector&, rjump::Vector& u) {
        u.setZero();
    };
    for (auto _ : state) {
        auto bundle = rjump::simulate_paths(c, zero, cfg);
        benchmark::DoNotOptimize(bundle.running_cost.data());
    }
    // steps per path ~ 1/dt; report path-step throughput
    state.SetItemsProcessed(state.iterations() * cfg.n_paths * 1000);
}
BENCHMARK(BM_simulate_open_loop)->Arg(200)->Arg(2000);

void BM_simulate_closed_loop(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    const auto law = rjump::synthesize_feedback(rjump::solve_riccati_ide(c, 1000), c);
    const auto cfg = config(state.range(0), 1e-3);
    for (auto _ : state) {
        auto bundle = rjump::simulate_closed_loop(c, law, cfg);
        benchmark::DoNotOptimize(bundle.running_cost.data());
    }
    state.SetItemsProcessed(state.iterations() * cfg.n_paths * 1000);
}
BENCHMARK(BM_simulate_closed_loop)->Arg(200)->Arg(2000);

void BM_optimality_gap(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    const auto law = rjump::synthesize_feedback(rjump::solve_riccati_ide(c, 1000), c);
    const auto cfg = config(500, 1e-3);
    const rjump::Policy zero = [](double, const rjump::Vector&, rjump::Vector& u) {
        u.setZero();
    };
    for (auto _ : state) {
        auto gap = rjump::optimality_gap(c, law, zero, cfg);
        benchmark::DoNotOptimize(gap.direct.mean);
    }
}
BENCHMARK(BM_optimality_gap);

}  // namespace
