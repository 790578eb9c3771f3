#include "tilepop/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

using nlohmann::json;

void IngestManifest::validate() const {
    if (city.empty() || city.find('_') != std::string::npos) {
        throw ValidationError("manifest city must be non-empty and contain no '_'");
    }
    if (services.empty()) throw ValidationError("manifest lists no services");
    std::vector<std::string> sorted = services;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("manifest lists a service twice");
    }
    for (const auto& s : services) {
        if (s.empty() || s.find_first_of(" ,\t") != std::string::npos) {
            throw ValidationError("invalid service name '" + s + "'");
        }
    }
    if (std::chrono::sys_days{first_date} > std::chrono::sys_days{last_date}) {
        throw ValidationError("manifest date range is empty");
    }
    if (!(outage_theta >= 0.0 && outage_theta < 1.0)) throw ValidationError("outage theta must be in [0, 1)");
}

IngestManifest manifest_from_json(const json& j) {
    IngestManifest m;
    try {
        m.city = j.at("city").get<std::string>();
        m.services = j.at("services").get<std::vector<std::string>>();
        if (j.contains("start_date")) m.first_date = parse_iso_date(j.at("start_date").get<std::string>());
        if (j.contains("end_date")) m.last_date = parse_iso_date(j.at("end_date").get<std::string>());
        if (j.contains("dst_date")) m.dst_date = parse_iso_date(j.at("dst_date").get<std::string>());
        if (j.contains("outage_theta")) m.outage_theta = j.at("outage_theta").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid manifest: ") + e.what());
    }
    m.validate();
    return m;
}

json manifest_to_json(const IngestManifest& m) {
    return {{"city", m.city},
            {"services", m.services},
            {"start_date", format_iso_date(m.first_date)},
            {"end_date", format_iso_date(m.last_date)},
            {"dst_date", format_iso_date(m.dst_date)},
            {"outage_theta", m.outage_theta}};
}

SlotMatrix DirectoryTrafficSource::load_day(const TrafficFileMeta& meta, Date dst_date) const {
    auto path = dir_ / traffic_file_name(meta, false);
    if (!std::filesystem::exists(path)) {
        path = dir_ / traffic_file_name(meta, true);
        if (!std::filesystem::exists(path)) {
            throw DataError("missing traffic file " + traffic_file_name(meta) + " in " + dir_.string());
        }
    }
    try {
        return parse_and_aggregate(read_file(path), meta, dst_date);
    } catch (const DataError& e) {
        throw DataError(path.filename().string() + ": " + e.what());
    }
}

namespace {

struct ChannelOutcome {
    SlotAccumulator acc;
    std::vector<OutageRecord> outages;
    std::size_t files = 0;
    std::size_t dst_files = 0;
    bool detection_ran = false;
};

ChannelOutcome ingest_channel(const IngestManifest& manifest, const std::vector<TileId>& tiles,
                              const TrafficSource& source, const Channel& channel) {
    ChannelOutcome out{SlotAccumulator(tiles), {}, 0, 0, false};
    const auto dates = manifest.dates();
    std::vector<SlotMatrix> days;
    std::vector<DailyTotal> totals;
    days.reserve(dates.size());
    for (const Date& d : dates) {
        TrafficFileMeta meta{manifest.city, channel.service, d, channel.direction};
        days.push_back(source.load_day(meta, manifest.dst_date));
        totals.push_back({d, days.back().network_total});
        ++out.files;
        if (d == manifest.dst_date) ++out.dst_files;
    }
    std::vector<Date> flagged;
    if (dates.size() >= 7) {
        flagged = detect_outages(totals, manifest.outage_theta);
        out.detection_ran = true;
    }
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (std::binary_search(flagged.begin(), flagged.end(), dates[i])) {
            out.outages.push_back({channel, dates[i], totals[i].total});
            continue;
        }
        out.acc.accumulate_day(days[i], dates[i]);
    }
    return out;
}

}  // namespace

IngestResult ingest_city(const IngestManifest& manifest, const std::vector<TileId>& tiles,
                         const TrafficSource& source, unsigned threads) {
    manifest.validate();
    std::vector<Channel> channels;
    for (const auto& s : manifest.services) {
        for (Direction d : kDirections) channels.push_back({s, d});
    }
    std::vector<std::optional<ChannelOutcome>> outcomes(channels.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= channels.size()) return;
            try {
                outcomes[i] = ingest_channel(manifest, tiles, source, channels[i]);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = channels.size();
                return;
            }
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(channels.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    IngestResult result;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        ChannelOutcome& o = *outcomes[i];
        result.report.files_read += o.files;
        result.report.dst_files += o.dst_files;
        result.report.outage_detection_ran = result.report.outage_detection_ran || o.detection_ran;
        result.report.outages.insert(result.report.outages.end(), o.outages.begin(), o.outages.end());
        result.accumulators.emplace(channels[i], std::move(o.acc));
    }
    return result;
}

json accumulators_to_json(const AccumulatorSet& set) {
    json channels = json::array();
    std::vector<std::uint64_t> ids;
    for (const auto& [channel, acc] : set) {
        if (ids.empty()) {
            for (TileId t : acc.tile_ids()) ids.push_back(t.value);
        }
        channels.push_back({{"service", channel.service},
                            {"direction", direction_token(channel.direction)},
                            {"sums", std::vector<double>(acc.raw_sums().begin(), acc.raw_sums().end())},
                            {"counts", std::vector<std::uint32_t>(acc.raw_counts().begin(), acc.raw_counts().end())}});
    }
    return {{"format", "tilepop-accumulators"},
            {"version", 1},
            {"day_types", {"Friday", "Saturday", "Sunday", "Weekday"}},
            {"slots", kSlots},
            {"tile_ids", ids},
            {"channels", std::move(channels)}};
}

AccumulatorSet accumulators_from_json(const json& j) {
    AccumulatorSet set;
    try {
        if (j.at("format").get<std::string>() != "tilepop-accumulators") throw DataError("not an accumulator file");
        std::vector<TileId> tiles;
        for (auto id : j.at("tile_ids").get<std::vector<std::uint64_t>>()) tiles.push_back(TileId{id});
        for (const json& c : j.at("channels")) {
            Channel ch{c.at("service").get<std::string>(),
                       parse_direction_token(c.at("direction").get<std::string>())};
            set.emplace(ch, SlotAccumulator::from_raw(tiles, c.at("sums").get<std::vector<double>>(),
                                                      c.at("counts").get<std::vector<std::uint32_t>>()));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid accumulator file: ") + e.what());
    } catch (const ValidationError& e) {
        throw DataError(std::string("invalid accumulator file: ") + e.what());
    }
    return set;
}

json ingest_report_to_json(const IngestReport& report) {
    json outages = json::array();
    for (const auto& o : report.outages) {
        outages.push_back({{"service", o.channel.service},
                           {"direction", direction_token(o.channel.direction)},
                           {"date", format_iso_date(o.date)},
                           {"network_total", o.total}});
    }
    return {{"files_read", report.files_read},
            {"dst_corrected_files", report.dst_files},
            {"outage_detection_ran", report.outage_detection_ran},
            {"outages", std::move(outages)}};
}

}  // namespace tilepop
