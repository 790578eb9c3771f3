#include <benchmark/benchmark.h>

#include <string>

#include "tilepop/calendar.hpp"
#include "tilepop/synth.hpp"
#include "tilepop/traffic_ingest.hpp"

using namespace tilepop;

namespace {

struct DayFile {
    std::string text;
    TrafficFileMeta meta;
};

DayFile day_file(std::size_t side) {
    SynthConfig cfg;
    cfg.rows = side;
    cfg.cols = side;
    cfg.n_services = 1;
    const SynthCity city = gen_city(cfg);
    const TrafficFileMeta meta{cfg.city, city.truth.services[0], parse_iso_date("2019-04-02"), Direction::Download};
    return {format_traffic_file(gen_traffic(city, cfg, meta)), meta};
}

void BM_ParseThenAggregate(benchmark::State& state) {
    const DayFile f = day_file(static_cast<std::size_t>(state.range(0)));
    const Date dst = parse_iso_date("2019-03-31");
    for (auto _ : state) {
        benchmark::DoNotOptimize(aggregate_to_slots(apply_dst_correction(parse_traffic_file(f.text, f.meta), dst)));
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * f.text.size()));
}

void BM_FusedParse(benchmark::State& state) {
    const DayFile f = day_file(static_cast<std::size_t>(state.range(0)));
    const Date dst = parse_iso_date("2019-03-31");
    for (auto _ : state) benchmark::DoNotOptimize(parse_and_aggregate(f.text, f.meta, dst));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * f.text.size()));
}

}  // namespace

BENCHMARK(BM_ParseThenAggregate)->Arg(50)->Arg(100);
BENCHMARK(BM_FusedParse)->Arg(50)->Arg(100);
