#include "tilepop/traffic_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

std::string_view direction_token(Direction dir) { return dir == Direction::Upload ? "UL" : "DL"; }

Direction parse_direction_token(std::string_view token) {
    if (token == "UL") return Direction::Upload;
    if (token == "DL") return Direction::Download;
    throw ValidationError("unknown traffic direction '" + std::string(token) + "'");
}

std::string traffic_file_name(const TrafficFileMeta& meta, bool gzip) {
    std::string name = meta.city + "_" + meta.service + "_" + format_compact_date(meta.date) + "_" +
                       std::string(direction_token(meta.direction)) + ".txt";
    if (gzip) name += ".gz";
    return name;
}

TrafficFileMeta parse_traffic_file_name(std::string_view file_name) {
    std::string_view stem = file_name;
    if (stem.ends_with(".gz")) stem.remove_suffix(3);
    if (!stem.ends_with(".txt")) throw ValidationError("traffic file name must end in .txt: " + std::string(file_name));
    stem.remove_suffix(4);
    const auto last = stem.rfind('_');
    const auto date_sep = last == std::string_view::npos ? last : stem.rfind('_', last - 1);
    const auto first = stem.find('_');
    if (last == std::string_view::npos || date_sep == std::string_view::npos || first >= date_sep) {
        throw ValidationError("traffic file name does not match city_service_YYYYMMDD_DIR: " + std::string(file_name));
    }
    TrafficFileMeta meta;
    meta.city = std::string(stem.substr(0, first));
    meta.service = std::string(stem.substr(first + 1, date_sep - first - 1));
    meta.date = parse_compact_date(stem.substr(date_sep + 1, last - date_sep - 1));
    meta.direction = parse_direction_token(stem.substr(last + 1));
    return meta;
}

namespace {

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

/// Splits a line into whitespace-separated tokens, writing into a reusable buffer.
void tokenize(std::string_view line, std::vector<std::string_view>& tokens) {
    tokens.clear();
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
    }
}

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
    throw DataError("line " + std::to_string(line_no) + ": " + what);
}

/// Shared line-level parsing for the batch and fused paths; calls emit(id, values).
template <class Emit>
void scan_traffic_lines(std::string_view bytes, Emit&& emit) {
    std::vector<std::string_view> tokens;
    tokens.reserve(kQuarterHours + 1);
    std::array<double, kQuarterHours> values{};
    std::unordered_set<std::uint64_t> seen;
    for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
        tokenize(line, tokens);
        if (tokens.empty()) return;
        if (tokens.size() != kQuarterHours + 1) {
            line_error(line_no, "expected tile id and 96 values, found " + std::to_string(tokens.size()) + " fields");
        }
        std::uint64_t id = 0;
        if (!parse_uint(tokens[0], id)) line_error(line_no, "invalid tile id '" + std::string(tokens[0]) + "'");
        if (!seen.insert(id).second) line_error(line_no, "duplicate tile id " + std::to_string(id));
        for (std::size_t q = 0; q < kQuarterHours; ++q) {
            double v = 0.0;
            if (!parse_double(tokens[q + 1], v)) {
                line_error(line_no, "non-numeric value '" + std::string(tokens[q + 1]) + "' in column " +
                                        std::to_string(q + 1));
            }
            if (v < 0.0) line_error(line_no, "negative value in column " + std::to_string(q + 1));
            values[q] = v;
        }
        emit(TileId{id}, values);
    });
}

bool is_dst_quarter(std::size_t q) noexcept {
    return q >= kDstFirstQuarter && q < kDstFirstQuarter + kDstQuarterCount;
}

}  // namespace

TrafficMatrix parse_traffic_file(std::string_view bytes, TrafficFileMeta meta) {
    TrafficMatrix m;
    m.meta = std::move(meta);
    scan_traffic_lines(bytes, [&](TileId id, const std::array<double, kQuarterHours>& values) {
        m.tile_ids.push_back(id);
        m.values.insert(m.values.end(), values.begin(), values.end());
    });
    m.missing.assign(m.values.size(), 0);
    return m;
}

std::string format_traffic_file(const TrafficMatrix& matrix) {
    std::string out;
    out.reserve(matrix.values.size() * 8);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        out += std::to_string(matrix.tile_ids[r].value);
        for (double v : matrix.row(r)) {
            out += ' ';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

TrafficMatrix apply_dst_correction(TrafficMatrix matrix, Date dst_date) {
    if (matrix.meta.date != dst_date) return matrix;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        for (std::size_t q = kDstFirstQuarter; q < kDstFirstQuarter + kDstQuarterCount; ++q) {
            matrix.missing[r * kQuarterHours + q] = 1;
        }
    }
    return matrix;
}

SlotMatrix aggregate_to_slots(const TrafficMatrix& matrix) {
    SlotMatrix out;
    out.tile_ids = matrix.tile_ids;
    out.values.assign(matrix.rows() * kSlots, 0.0);
    out.missing.assign(matrix.rows() * kSlots, 0);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const double* v = matrix.values.data() + r * kQuarterHours;
        const std::uint8_t* mask = matrix.missing.data() + r * kQuarterHours;
        for (std::size_t s = 0; s < kSlots; ++s) {
            double sum = 0.0;
            bool missing = false;
            for (std::size_t q = s * kQuartersPerSlot; q < (s + 1) * kQuartersPerSlot; ++q) {
                if (mask[q]) {
                    missing = true;
                } else {
                    sum += v[q];
                    out.network_total += v[q];
                }
            }
            out.missing[r * kSlots + s] = missing ? 1 : 0;
            out.values[r * kSlots + s] = missing ? 0.0 : sum;
        }
    }
    return out;
}

SlotMatrix parse_and_aggregate(std::string_view bytes, const TrafficFileMeta& meta, Date dst_date) {
    const bool dst = meta.date == dst_date;
    SlotMatrix out;
    scan_traffic_lines(bytes, [&](TileId id, const std::array<double, kQuarterHours>& values) {
        out.tile_ids.push_back(id);
        for (std::size_t s = 0; s < kSlots; ++s) {
            double sum = 0.0;
            bool missing = false;
            for (std::size_t q = s * kQuartersPerSlot; q < (s + 1) * kQuartersPerSlot; ++q) {
                if (dst && is_dst_quarter(q)) {
                    missing = true;
                } else {
                    sum += values[q];
                    out.network_total += values[q];
                }
            }
            out.missing.push_back(missing ? 1 : 0);
            out.values.push_back(missing ? 0.0 : sum);
        }
    });
    return out;
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<Date> detect_outages(std::span<const DailyTotal> totals, double theta) {
    if (totals.size() < 7) throw ValidationError("outage detection needs at least 7 dates");
    if (!(theta >= 0.0)) throw ValidationError("outage threshold must be non-negative");
    std::array<std::vector<double>, kDayTypes.size()> by_type;
    for (const DailyTotal& t : totals) by_type[static_cast<std::size_t>(day_type_of(t.date))].push_back(t.total);
    std::array<double, kDayTypes.size()> medians{};
    for (std::size_t i = 0; i < by_type.size(); ++i) {
        if (!by_type[i].empty()) medians[i] = median_of(by_type[i]);
    }
    std::vector<Date> flagged;
    for (const DailyTotal& t : totals) {
        if (t.total < theta * medians[static_cast<std::size_t>(day_type_of(t.date))]) flagged.push_back(t.date);
    }
    std::sort(flagged.begin(), flagged.end());
    return flagged;
}

SlotAccumulator::SlotAccumulator(std::vector<TileId> tiles) : tiles_(std::move(tiles)) {
    index_.reserve(tiles_.size());
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
        if (!index_.emplace(tiles_[i].value, i).second) {
            throw DataError("duplicate tile id " + std::to_string(tiles_[i].value) + " in accumulator");
        }
    }
    sums_.assign(tiles_.size() * kDayTypes.size() * kSlots, 0.0);
    counts_.assign(sums_.size(), 0);
}

void SlotAccumulator::accumulate_day(const SlotMatrix& slots, Date date) {
    const DayType type = day_type_of(date);
    for (std::size_t r = 0; r < slots.rows(); ++r) {
        auto it = index_.find(slots.tile_ids[r].value);
        if (it == index_.end()) {
            throw DataError("tile " + std::to_string(slots.tile_ids[r].value) + " is not part of the city grid");
        }
        for (std::size_t s = 0; s < kSlots; ++s) {
            if (slots.missing[r * kSlots + s]) continue;
            const std::size_t c = cell(it->second, type, s);
            sums_[c] += slots.values[r * kSlots + s];
            counts_[c] += 1;
        }
    }
}

void SlotAccumulator::merge(const SlotAccumulator& other) {
    if (other.tiles_ != tiles_) throw DataError("cannot merge accumulators over different tile sets");
    for (std::size_t i = 0; i < sums_.size(); ++i) {
        sums_[i] += other.sums_[i];
        counts_[i] += other.counts_[i];
    }
}

double SlotAccumulator::mean(std::size_t tile, DayType type, std::size_t slot) const {
    const std::size_t c = cell(tile, type, slot);
    return counts_[c] == 0 ? 0.0 : sums_[c] / static_cast<double>(counts_[c]);
}

SlotAccumulator SlotAccumulator::from_raw(std::vector<TileId> tiles, std::vector<double> sums,
                                          std::vector<std::uint32_t> counts) {
    SlotAccumulator acc(std::move(tiles));
    if (sums.size() != acc.sums_.size() || counts.size() != acc.counts_.size()) {
        throw DataError("accumulator arrays do not match tile count");
    }
    acc.sums_ = std::move(sums);
    acc.counts_ = std::move(counts);
    return acc;
}

SlotAccumulator accumulate_day(const SlotMatrix& slots, Date date, SlotAccumulator acc) {
    acc.accumulate_day(slots, date);
    return acc;
}

}  // namespace tilepop
