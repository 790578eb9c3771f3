#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tilepop/traffic_ingest.hpp"

namespace tilepop {

/// Study window and cleaning parameters for one city.
struct IngestManifest {
    std::string city;
    std::vector<std::string> services;
    Date first_date{std::chrono::year{2019}, std::chrono::March, std::chrono::day{16}};
    Date last_date{std::chrono::year{2019}, std::chrono::May, std::chrono::day{31}};
    Date dst_date{std::chrono::year{2019}, std::chrono::March, std::chrono::day{31}};
    double outage_theta = 0.1;

    std::vector<Date> dates() const { return date_range(first_date, last_date); }
    void validate() const;
};

IngestManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const IngestManifest& m);

/// One (service, direction) traffic stream.
struct Channel {
    std::string service;
    Direction direction = Direction::Download;
    friend auto operator<=>(const Channel&, const Channel&) = default;
};

using AccumulatorSet = std::map<Channel, SlotAccumulator>;

/// Where per-day slot matrices come from. load_day must be safe to call concurrently.
class TrafficSource {
public:
    virtual ~TrafficSource() = default;
    virtual SlotMatrix load_day(const TrafficFileMeta& meta, Date dst_date) const = 0;
};

/// Reads "{city}_{service}_{YYYYMMDD}_{UL|DL}.txt[.gz]" files from one directory.
class DirectoryTrafficSource final : public TrafficSource {
public:
    explicit DirectoryTrafficSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
    SlotMatrix load_day(const TrafficFileMeta& meta, Date dst_date) const override;

private:
    std::filesystem::path dir_;
};

struct OutageRecord {
    Channel channel;
    Date date;
    double total = 0.0;
};

struct IngestReport {
    std::size_t files_read = 0;
    std::size_t dst_files = 0;
    bool outage_detection_ran = false;
    std::vector<OutageRecord> outages;
};

struct IngestResult {
    AccumulatorSet accumulators;
    IngestReport report;
};

/// Reads every (service, direction, date) of the manifest, flags outage dates per
/// channel and folds the remaining days into one accumulator per channel. Channels
/// are independent and each folds its dates in calendar order, so results do not
/// depend on `threads`.
IngestResult ingest_city(const IngestManifest& manifest, const std::vector<TileId>& tiles,
                         const TrafficSource& source, unsigned threads = 1);

nlohmann::json accumulators_to_json(const AccumulatorSet& set);
AccumulatorSet accumulators_from_json(const nlohmann::json& j);
nlohmann::json ingest_report_to_json(const IngestReport& report);

}  // namespace tilepop
