#include <benchmark/benchmark.h>

#include "random_data.hpp"
#include "tilepop/gbtree.hpp"

using namespace tilepop;

namespace {

void train_bench(benchmark::State& state, SplitMode mode) {
    const Dataset ds = fixture::random_dataset(static_cast<std::size_t>(state.range(0)), 64, 3);
    TrainConfig cfg;
    cfg.n_rounds = 50;
    cfg.early_stopping_rounds = 0;
    cfg.mode = mode;
    const Split split = fixture::all_train(ds);
    for (auto _ : state) benchmark::DoNotOptimize(train(ds, split, cfg));
}

void BM_TrainHistogram(benchmark::State& state) { train_bench(state, SplitMode::Histogram); }
void BM_TrainExact(benchmark::State& state) { train_bench(state, SplitMode::Exact); }

}  // namespace

BENCHMARK(BM_TrainHistogram)->Arg(1000)->Arg(2500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainExact)->Arg(1000)->Arg(2500)->Unit(benchmark::kMillisecond);
