#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tilepop/calendar.hpp"
#include "tilepop/grid_geo.hpp"

namespace tilepop {

enum class Direction { Upload, Download };
inline constexpr std::array<Direction, 2> kDirections{Direction::Upload, Direction::Download};

/// "UL" / "DL"
std::string_view direction_token(Direction dir);
Direction parse_direction_token(std::string_view token);

inline constexpr std::size_t kQuarterHours = 96;
inline constexpr std::size_t kSlots = 12;
inline constexpr std::size_t kQuartersPerSlot = kQuarterHours / kSlots;

/// Local 02:00-03:00 quarter-hours that do not exist on the spring-forward date.
inline constexpr std::size_t kDstFirstQuarter = 8;
inline constexpr std::size_t kDstQuarterCount = 4;

struct TrafficFileMeta {
    std::string city;
    std::string service;
    Date date;
    Direction direction = Direction::Download;
};

/// "{city}_{service}_{YYYYMMDD}_{UL|DL}.txt" (".txt.gz" when compressed).
std::string traffic_file_name(const TrafficFileMeta& meta, bool gzip = false);

/// Inverse of traffic_file_name. The city is the first '_' field; the service may contain '_'.
TrafficFileMeta parse_traffic_file_name(std::string_view file_name);

/// One traffic file: tiles x 96 quarter-hour volumes plus a missing mask.
struct TrafficMatrix {
    TrafficFileMeta meta;
    std::vector<TileId> tile_ids;
    std::vector<double> values;         // rows * 96
    std::vector<std::uint8_t> missing;  // rows * 96, 1 = masked

    std::size_t rows() const noexcept { return tile_ids.size(); }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * kQuarterHours, kQuarterHours}; }
};

/// Parses "TILE_ID v1 ... v96" lines. Blank lines are ignored. Errors carry the line number.
TrafficMatrix parse_traffic_file(std::string_view bytes, TrafficFileMeta meta);

/// Text form understood by parse_traffic_file, values in shortest round-trip form.
std::string format_traffic_file(const TrafficMatrix& matrix);

/// Masks quarter-hours 8..11 of every row when the matrix date is the spring-forward date.
TrafficMatrix apply_dst_correction(TrafficMatrix matrix, Date dst_date);

/// Per-day 2-hour slot volumes: slot s is the sum of quarter-hours 8s..8s+7, missing if any of them is.
struct SlotMatrix {
    std::vector<TileId> tile_ids;
    std::vector<double> values;         // rows * 12
    std::vector<std::uint8_t> missing;  // rows * 12
    double network_total = 0.0;         // sum of all unmasked quarter-hour volumes

    std::size_t rows() const noexcept { return tile_ids.size(); }
    friend bool operator==(const SlotMatrix&, const SlotMatrix&) = default;
};

SlotMatrix aggregate_to_slots(const TrafficMatrix& matrix);

/// Single-pass parse + DST mask + slot aggregation. Produces exactly the same
/// SlotMatrix as aggregate_to_slots(apply_dst_correction(parse_traffic_file(...))).
SlotMatrix parse_and_aggregate(std::string_view bytes, const TrafficFileMeta& meta, Date dst_date);

struct DailyTotal {
    Date date;
    double total = 0.0;
};

/// Flags dates whose network-wide total is below theta times the median total of all
/// dates sharing the same day type. Requires at least 7 dates. Result is date-sorted.
std::vector<Date> detect_outages(std::span<const DailyTotal> totals, double theta = 0.1);

/// Running (sum, count) per (tile, day type, slot). Merging is a commutative monoid.
class SlotAccumulator {
public:
    SlotAccumulator() = default;
    explicit SlotAccumulator(std::vector<TileId> tiles);

    /// Adds every non-missing slot of one day under the date's day type.
    /// Throws DataError when the matrix holds a tile unknown to the accumulator.
    void accumulate_day(const SlotMatrix& slots, Date date);

    /// Element-wise (sum, count) addition; tile lists must match.
    void merge(const SlotAccumulator& other);

    std::span<const TileId> tile_ids() const noexcept { return tiles_; }
    std::size_t tile_count() const noexcept { return tiles_.size(); }

    double sum(std::size_t tile, DayType type, std::size_t slot) const { return sums_[cell(tile, type, slot)]; }
    std::uint32_t count(std::size_t tile, DayType type, std::size_t slot) const {
        return counts_[cell(tile, type, slot)];
    }
    /// Mean slot volume, or 0 when nothing was accumulated (check count()).
    double mean(std::size_t tile, DayType type, std::size_t slot) const;

    std::span<const double> raw_sums() const noexcept { return sums_; }
    std::span<const std::uint32_t> raw_counts() const noexcept { return counts_; }

    /// Rebuilds from raw arrays (deserialization).
    static SlotAccumulator from_raw(std::vector<TileId> tiles, std::vector<double> sums,
                                    std::vector<std::uint32_t> counts);

    friend bool operator==(const SlotAccumulator&, const SlotAccumulator&) = default;

private:
    std::size_t cell(std::size_t tile, DayType type, std::size_t slot) const noexcept {
        return (tile * kDayTypes.size() + static_cast<std::size_t>(type)) * kSlots + slot;
    }

    std::vector<TileId> tiles_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::vector<double> sums_;
    std::vector<std::uint32_t> counts_;
};

/// Functional form: returns the accumulator with the day folded in.
SlotAccumulator accumulate_day(const SlotMatrix& slots, Date date, SlotAccumulator acc);

}  // namespace tilepop
