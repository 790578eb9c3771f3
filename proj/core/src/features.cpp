#include "tilepop/features.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"
#include "tilepop/random.hpp"

namespace tilepop {

using nlohmann::json;

std::string FeatureKey::name() const {
    return service + "_" + std::string(direction_token(direction)) + "_" + std::string(day_type_name(day_type)) + "_" +
           std::to_string(slot);
}

std::optional<FeatureKey> parse_feature_name(std::string_view name) {
    const auto p3 = name.rfind('_');
    if (p3 == std::string_view::npos || p3 == 0) return std::nullopt;
    const auto p2 = name.rfind('_', p3 - 1);
    if (p2 == std::string_view::npos || p2 == 0) return std::nullopt;
    const auto p1 = name.rfind('_', p2 - 1);
    if (p1 == std::string_view::npos || p1 == 0) return std::nullopt;
    std::uint64_t slot = 0;
    if (!parse_uint(name.substr(p3 + 1), slot) || slot >= kSlots) return std::nullopt;
    FeatureKey key;
    key.service = std::string(name.substr(0, p1));
    key.slot = static_cast<std::size_t>(slot);
    try {
        key.direction = parse_direction_token(name.substr(p1 + 1, p2 - p1 - 1));
        key.day_type = parse_day_type(name.substr(p2 + 1, p3 - p2 - 1));
    } catch (const ValidationError&) {
        return std::nullopt;
    }
    return key;
}

std::size_t feature_count(std::size_t n_services, std::size_t n_day_types, std::size_t n_directions,
                          std::size_t n_slots) {
    return n_services * n_day_types * n_directions * n_slots;
}

std::vector<FeatureKey> feature_keys(std::span<const std::string> services) {
    std::vector<FeatureKey> keys;
    keys.reserve(feature_count(services.size(), kDayTypes.size(), kDirections.size(), kSlots));
    for (const auto& s : services) {
        for (Direction dir : kDirections) {
            for (DayType dt : kDayTypes) {
                for (std::size_t slot = 0; slot < kSlots; ++slot) keys.push_back({s, dir, dt, slot});
            }
        }
    }
    return keys;
}

std::optional<std::size_t> FeatureMatrix::column_of(const FeatureKey& key) const {
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) return std::nullopt;
    return static_cast<std::size_t>(it - keys.begin());
}

std::size_t FeatureMatrix::imputed_count() const {
    return static_cast<std::size_t>(std::count(imputed.begin(), imputed.end(), std::uint8_t{1}));
}

FeatureMatrix build_feature_matrix(const AccumulatorSet& accumulators, std::span<const std::string> services,
                                   const CityGrid& grid) {
    FeatureMatrix fm;
    fm.tile_ids = grid.tile_ids();
    fm.keys = feature_keys(services);
    const std::size_t n = fm.rows();
    const std::size_t p = fm.cols();
    fm.values.assign(n * p, 0.0);
    fm.imputed.assign(n * p, 0);

    std::size_t col = 0;
    for (const auto& s : services) {
        for (Direction dir : kDirections) {
            auto it = accumulators.find(Channel{s, dir});
            if (it == accumulators.end()) {
                throw DataError("no accumulated traffic for " + s + " " + std::string(direction_token(dir)));
            }
            const SlotAccumulator& acc = it->second;
            if (acc.tile_count() != n || !std::equal(fm.tile_ids.begin(), fm.tile_ids.end(), acc.tile_ids().begin())) {
                throw DataError("tile set of " + s + " " + std::string(direction_token(dir)) +
                                " accumulator does not match the city grid");
            }
            for (DayType dt : kDayTypes) {
                for (std::size_t slot = 0; slot < kSlots; ++slot, ++col) {
                    for (std::size_t r = 0; r < n; ++r) {
                        if (acc.count(r, dt, slot) == 0) {
                            fm.imputed[r * p + col] = 1;
                        } else {
                            fm.values[r * p + col] = acc.mean(r, dt, slot);
                        }
                    }
                }
            }
        }
    }
    return fm;
}

std::optional<std::size_t> Dataset::column_of(std::string_view name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - feature_names.begin());
}

namespace {

std::vector<double> align_by_id(const std::vector<TileId>& ids, const PopulationVector& p, std::string_view what) {
    std::unordered_map<std::uint64_t, double> lookup;
    lookup.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) lookup[p.tile_ids[i].value] = p.values[i];
    std::vector<double> out;
    out.reserve(ids.size());
    for (TileId id : ids) {
        auto it = lookup.find(id.value);
        if (it == lookup.end()) {
            throw DataError("tile " + std::to_string(id.value) + " missing from " + std::string(what));
        }
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

Dataset attach_targets(const FeatureMatrix& fm, const PopulationVector& target, const PopulationVector* night_extra) {
    Dataset ds;
    ds.tile_ids = fm.tile_ids;
    ds.target = align_by_id(fm.tile_ids, target, "target population");
    for (double v : ds.target) {
        if (!std::isfinite(v) || v < 0.0) throw DataError("target population must be finite and non-negative");
    }
    for (const auto& k : fm.keys) ds.feature_names.push_back(k.name());
    if (night_extra == nullptr) {
        ds.x = fm.values;
        return ds;
    }
    const auto night = align_by_id(fm.tile_ids, *night_extra, "night population");
    ds.has_night_column = true;
    ds.feature_names.emplace_back(kNightColumn);
    const std::size_t p = fm.cols();
    ds.x.resize(fm.rows() * (p + 1));
    for (std::size_t r = 0; r < fm.rows(); ++r) {
        std::copy_n(fm.values.begin() + static_cast<std::ptrdiff_t>(r * p), p,
                    ds.x.begin() + static_cast<std::ptrdiff_t>(r * (p + 1)));
        ds.x[r * (p + 1) + p] = night[r];
    }
    return ds;
}

Split split_dataset(const Dataset& ds, SplitFractions fractions, std::uint64_t seed) {
    const std::size_t n = ds.rows();
    if (n < 3) throw ValidationError("splitting needs at least 3 tiles");
    const double fsum = fractions.train + fractions.test + fractions.validation;
    if (fractions.train <= 0.0 || fractions.test < 0.0 || fractions.validation < 0.0 || std::abs(fsum - 1.0) > 1e-9) {
        throw ValidationError("split fractions must be non-negative, train positive, and sum to 1");
    }
    std::vector<std::pair<TileId, std::size_t>> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) order.emplace_back(ds.tile_ids[i], i);
    std::sort(order.begin(), order.end());
    SplitMix64 rng(seed);
    fisher_yates_shuffle(std::span(order), rng);

    const auto nd = static_cast<double>(n);
    const auto b1 = static_cast<std::size_t>(std::llround(nd * fractions.train));
    const auto b2 =
        std::max(b1, std::min(n, static_cast<std::size_t>(std::llround(nd * (fractions.train + fractions.test)))));
    Split split;
    split.fractions = fractions;
    split.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        auto& part = i < b1 ? split.train : (i < b2 ? split.test : split.validation);
        part.push_back(order[i].second);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.validation.begin(), split.validation.end());
    return split;
}

std::string write_dataset_csv(const Dataset& ds) {
    std::string out = "tile_id";
    const std::size_t traffic_cols = ds.has_night_column ? ds.cols() - 1 : ds.cols();
    for (std::size_t c = 0; c < traffic_cols; ++c) out += "," + ds.feature_names[c];
    out += ",target";
    if (ds.has_night_column) out += "," + std::string(kNightColumn);
    out += '\n';
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        out += std::to_string(ds.tile_ids[r].value);
        for (std::size_t c = 0; c < traffic_cols; ++c) {
            out += ',';
            append_double(out, ds.at(r, c));
        }
        out += ',';
        append_double(out, ds.target[r]);
        if (ds.has_night_column) {
            out += ',';
            append_double(out, ds.at(r, ds.cols() - 1));
        }
        out += '\n';
    }
    return out;
}

Dataset read_dataset_csv(std::string_view bytes) {
    Dataset ds;
    std::size_t target_col = 0;
    std::size_t n_fields = 0;
    for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        auto fields = split_fields(line, ',');
        if (line_no == 1) {
            if (fields.empty() || fields[0] != "tile_id") throw DataError("dataset CSV must start with tile_id");
            auto it = std::find(fields.begin(), fields.end(), std::string_view("target"));
            if (it == fields.end()) throw DataError("dataset CSV has no target column");
            target_col = static_cast<std::size_t>(it - fields.begin());
            n_fields = fields.size();
            for (std::size_t c = 1; c < fields.size(); ++c) {
                if (c != target_col) ds.feature_names.emplace_back(fields[c]);
            }
            if (n_fields == target_col + 2) {
                if (fields.back() != kNightColumn) throw DataError("unexpected column after target");
                ds.has_night_column = true;
            } else if (n_fields != target_col + 1) {
                throw DataError("dataset CSV has unexpected columns after target");
            }
            return;
        }
        if (fields.size() != n_fields) {
            throw DataError("dataset CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(n_fields));
        }
        std::uint64_t id = 0;
        if (!parse_uint(fields[0], id)) throw DataError("dataset CSV line " + std::to_string(line_no) + ": bad tile id");
        ds.tile_ids.push_back(TileId{id});
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            if (!parse_double(fields[c], v)) {
                throw DataError("dataset CSV line " + std::to_string(line_no) + ": bad number in column " +
                                std::to_string(c));
            }
            if (c == target_col) {
                ds.target.push_back(v);
            } else {
                ds.x.push_back(v);
            }
        }
    });
    if (n_fields == 0) throw DataError("empty dataset CSV");
    return ds;
}

std::string write_feature_matrix_csv(const FeatureMatrix& fm) {
    std::string out = "tile_id";
    for (const auto& k : fm.keys) {
        out += ',';
        out += k.name();
    }
    out += '\n';
    for (std::size_t r = 0; r < fm.rows(); ++r) {
        out += std::to_string(fm.tile_ids[r].value);
        for (std::size_t c = 0; c < fm.cols(); ++c) {
            out += ',';
            append_double(out, fm.at(r, c));
        }
        out += '\n';
    }
    return out;
}

FeatureMatrix read_feature_matrix_csv(std::string_view bytes) {
    FeatureMatrix fm;
    std::size_t n_fields = 0;
    for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        auto fields = split_fields(line, ',');
        if (line_no == 1) {
            if (fields.empty() || fields[0] != "tile_id") throw DataError("feature CSV must start with tile_id");
            for (std::size_t c = 1; c < fields.size(); ++c) {
                auto key = parse_feature_name(fields[c]);
                if (!key) throw DataError("feature CSV: '" + std::string(fields[c]) + "' is not a feature name");
                fm.keys.push_back(std::move(*key));
            }
            n_fields = fields.size();
            return;
        }
        if (fields.size() != n_fields) {
            throw DataError("feature CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(n_fields));
        }
        std::uint64_t id = 0;
        if (!parse_uint(fields[0], id)) throw DataError("feature CSV line " + std::to_string(line_no) + ": bad tile id");
        fm.tile_ids.push_back(TileId{id});
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            if (!parse_double(fields[c], v)) {
                throw DataError("feature CSV line " + std::to_string(line_no) + ": bad number in column " +
                                std::to_string(c));
            }
            fm.values.push_back(v);
        }
    });
    if (n_fields == 0) throw DataError("empty feature CSV");
    fm.imputed.assign(fm.values.size(), 0);
    return fm;
}

json dataset_sidecar(const FeatureMatrix& fm, const Split& split) {
    json cells = json::array();
    for (std::size_t r = 0; r < fm.rows(); ++r) {
        for (std::size_t c = 0; c < fm.cols(); ++c) {
            if (fm.imputed[r * fm.cols() + c]) cells.push_back({fm.tile_ids[r].value, fm.keys[c].name()});
        }
    }
    return {{"imputed_count", fm.imputed_count()},
            {"imputed_cells", std::move(cells)},
            {"imputation", "zero"},
            {"split",
             {{"seed", split.seed},
              {"fractions", {split.fractions.train, split.fractions.test, split.fractions.validation}},
              {"sizes", {split.train.size(), split.test.size(), split.validation.size()}}}}};
}

}  // namespace tilepop
