#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "rjump/lattice.hpp"

namespace {

long tree_nodes(int nt) {
    long total = 0, level = 1;
    for (int k = 0; k <= nt; ++k, level *= 4) total += level;
    return total;
}

// Full pipeline on an explicit 4-branch tree: the node count is 4^nt, so the
// argument sweep multiplies the work roughly 4x per step.
void BM_lattice_explicit(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    rjump::LatticeSpec spec;
    spec.nt = static_cast<int>(state.range(0));
    spec.force_explicit = true;
    for (auto _ : state) {
        auto tree = rjump::build_tree(c, spec);
        rjump::backward_induction(tree, c);
        rjump::doob_decompose(tree, c);
        benchmark::DoNotOptimize(tree.K_at(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * tree_nodes(spec.nt));
}

void BM_lattice_collapsed(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    rjump::LatticeSpec spec;
    spec.nt = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto tree = rjump::build_tree(c, spec);
        rjump::backward_induction(tree, c);
        rjump::doob_decompose(tree, c);
        benchmark::DoNotOptimize(tree.K_at(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * spec.nt);
}

void BM_lattice_structure_check(benchmark::State& state) {
    const auto c = bench::scalar_jump_model();
    rjump::LatticeSpec spec;
    spec.nt = static_cast<int>(state.range(0));
    spec.force_explicit = true;
    auto tree = rjump::build_tree(c, spec);
    rjump::backward_induction(tree, c);
    rjump::doob_decompose(tree, c);
    for (auto _ : state) {
        auto rep = rjump::check_structure(tree, c);
        benchmark::DoNotOptimize(rep.min_K_eig);
    }
}

BENCHMARK(BM_lattice_explicit)->Arg(4)->Arg(6)->Arg(8);
BENCHMARK(BM_lattice_collapsed)->Arg(100)->Arg(1000);
BENCHMARK(BM_lattice_structure_check)->Arg(6);

}  // namespace
