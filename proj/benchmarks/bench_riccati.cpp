#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "rjump/riccati.hpp"

namespace {

void BM_riccati_scalar(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    const int nt = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto grid = rjump::solve_riccati_ide(c, nt);
        benchmark::DoNotOptimize(grid.K.front());
    }
    state.SetItemsProcessed(state.iterations() * nt);
}
BENCHMARK(BM_riccati_scalar)->Arg(250)->Arg(1000)->Arg(4000);

void BM_riccati_dense(benchmark::State& state) {
    const auto c = bench::dense_model(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto grid = rjump::solve_riccati_ide(c, 200);
        benchmark::DoNotOptimize(grid.K.front());
    }
    state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_riccati_dense)->Arg(2)->Arg(4)->Arg(8);

void BM_riccati_residual(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    const auto grid = rjump::solve_riccati_ide(c, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        double r = rjump::riccati_residual(grid, c);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_riccati_residual)->Arg(1000);

}  // namespace
