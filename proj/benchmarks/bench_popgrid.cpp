#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "tilepop/popgrid.hpp"
#include "tilepop/random.hpp"

using namespace tilepop;

namespace {

CoarseRaster noisy_raster(std::size_t n) {
    CoarseRaster r = fixture::raster(n, n, 2.0, 48.0, 0.01);
    SplitMix64 rng(1);
    for (double& v : r.values) v = rng.uniform(0.0, 5000.0);
    return r;
}

void BM_AkimaFit(benchmark::State& state) {
    const CoarseRaster r = noisy_raster(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fit_akima(r));
}

void BM_Downscale(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const CoarseRaster r = noisy_raster(n);
    const CityGrid g = fixture::lattice(n * 10, n * 10, 2.0, 48.0, 0.001);
    for (auto _ : state) benchmark::DoNotOptimize(downscale_population(r, g, Period::Night, true));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * g.size()));
}

}  // namespace

BENCHMARK(BM_AkimaFit)->Arg(10)->Arg(50);
BENCHMARK(BM_Downscale)->Arg(7)->Arg(20)->Unit(benchmark::kMillisecond);
