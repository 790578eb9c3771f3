#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tilepop/features.hpp"
#include "tilepop/ingest.hpp"
#include "tilepop/popgrid.hpp"

namespace tilepop {

/// Whole-file volume scaling for a simulated network outage.
struct SynthOutage {
    std::string service;
    Date date;
    double factor = 0.05;
};

struct SynthConfig {
    std::uint64_t seed = 42;
    std::string city = "synthville";
    std::size_t rows = 50;  // fine tiles south-north
    std::size_t cols = 50;  // fine tiles west-east
    double tile_size = 0.001;  // degrees
    double origin_lon = 2.25;
    double origin_lat = 48.80;
    std::size_t coarse_factor = 10;  // fine tiles per coarse cell edge
    std::size_t raster_margin = 1;   // coarse cells of simulated surroundings on each side
    std::size_t n_services = 8;
    Date first_date{std::chrono::year{2019}, std::chrono::March, std::chrono::day{16}};
    Date last_date{std::chrono::year{2019}, std::chrono::May, std::chrono::day{31}};
    Date dst_date{std::chrono::year{2019}, std::chrono::March, std::chrono::day{31}};

    // Night population field: density * (floor + sum of Gaussian bumps).
    double density = 200.0;
    double density_floor = 0.35;
    std::size_t n_bumps = 6;
    double bump_min_width = 12.0;  // tiles
    double bump_max_width = 22.0;

    // Commuter zones, in coarse cells around the central cell (Chebyshev distance).
    std::size_t center_radius = 1;  // distance <= center_radius: gains by day
    std::size_t ring_radius = 2;    // distance >= ring_radius: loses by day
    double commuter_flow = 0.2;     // sum |day - night| / sum night
    double inflow_share = 0.25;     // (day total - night total) / (flow * night total)

    double sigma = 0.3;             // per-slot multiplicative lognormal noise
    double propensity_sigma = 0.25; // persistent per (tile, service, direction) usage factor
    std::vector<SynthOutage> outages;

    void validate() const;
    std::vector<std::string> service_names() const;
    IngestManifest manifest() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

enum class Zone : std::uint8_t { Neutral = 0, Center = 1, Ring = 2 };

struct SynthTruth {
    // Population field over the city plus its margin, row-major from the south-west corner.
    std::size_t field_rows = 0;
    std::size_t field_cols = 0;
    std::vector<double> field_night;
    std::vector<double> field_day;

    // City tiles only, in grid order.
    std::vector<TileId> tile_ids;
    std::vector<double> night;
    std::vector<double> day;
    std::vector<Zone> zones;
    std::vector<std::string> services;
    std::vector<bool> day_weighted;  // per service
    /// Per-person volume per 2-hour slot, indexed [service][direction][day type][slot].
    std::vector<double> profiles;
    std::vector<double> propensity;  // [tile][service][direction]

    double profile(std::size_t service, Direction dir, DayType dt, std::size_t slot) const;
    PopulationVector population(Period p) const;
};

struct SynthCity {
    CityGrid grid;
    SynthTruth truth;
};

/// Share of the day population in slot t (0 = night frame, 1 = day frame).
double day_share(std::size_t slot);

SynthCity gen_city(const SynthConfig& cfg);

/// Quarter-hour volumes of one file, all 96 columns present.
TrafficMatrix gen_traffic(const SynthCity& city, const SynthConfig& cfg, const TrafficFileMeta& meta);

/// Serves generated days directly through the ingest aggregation code.
class SynthTrafficSource final : public TrafficSource {
public:
    SynthTrafficSource(const SynthCity& city, const SynthConfig& cfg) : city_(city), cfg_(cfg) {}
    SlotMatrix load_day(const TrafficFileMeta& meta, Date dst_date) const override;

private:
    const SynthCity& city_;
    const SynthConfig& cfg_;
};

/// Exact sums of the fine population field (city and margin) over coarse cells.
CoarseRaster gen_coarse_raster(const SynthCity& city, const SynthConfig& cfg, Period period);

/// Day-frame keys (slots 10:00-18:00) the generator makes proportional to the day population.
bool is_informative_key(const FeatureKey& key);

nlohmann::json truth_to_json(const SynthCity& city, const SynthConfig& cfg);

struct SynthFiles {
    std::filesystem::path geojson;
    std::filesystem::path traffic_dir;
    std::filesystem::path night_raster;
    std::filesystem::path day_raster;
    std::filesystem::path truth;
    std::filesystem::path manifest;
};

/// Writes city.geojson, traffic/, night.asc, day.asc, truth.json and manifest.json under dir.
SynthFiles write_synth_bundle(const SynthCity& city, const SynthConfig& cfg, const std::filesystem::path& dir,
                              bool with_traffic = true, unsigned threads = 1);

}  // namespace tilepop
