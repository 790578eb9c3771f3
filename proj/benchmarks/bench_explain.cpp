#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "random_data.hpp"
#include "tilepop/explain.hpp"

using namespace tilepop;

namespace {

void BM_TreeShapEnsemble(benchmark::State& state) {
    const Dataset ds = fixture::random_dataset(500, 32, 4);
    TrainConfig cfg;
    cfg.n_rounds = 100;
    cfg.max_depth = static_cast<std::size_t>(state.range(0));
    cfg.early_stopping_rounds = 0;
    const Ensemble e = train(ds, fixture::all_train(ds), cfg).ensemble;
    std::vector<std::size_t> rows(ds.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (auto _ : state) benchmark::DoNotOptimize(tree_shap(e, ds, rows));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows.size()));
}

void BM_BruteForceTree(benchmark::State& state) {
    SplitMix64 rng(5);
    const Tree t = fixture::random_tree(rng, 3, 8);
    std::vector<double> row(8, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(brute_force_shap(t, row, 8));
}

void BM_TreeShapTree(benchmark::State& state) {
    SplitMix64 rng(5);
    const Tree t = fixture::random_tree(rng, 3, 8);
    std::vector<double> row(8, 0.5);
    std::vector<double> phi(8);
    for (auto _ : state) {
        tree_shap_single(t, row, phi);
        benchmark::DoNotOptimize(phi.data());
    }
}

}  // namespace

BENCHMARK(BM_TreeShapEnsemble)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BruteForceTree);
BENCHMARK(BM_TreeShapTree);
