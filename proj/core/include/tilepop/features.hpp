#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tilepop/ingest.hpp"
#include "tilepop/popgrid.hpp"

namespace tilepop {

/// Column identity (service, direction, day type, 2-hour slot).
struct FeatureKey {
    std::string service;
    Direction direction = Direction::Download;
    DayType day_type = DayType::Weekday;
    std::size_t slot = 0;

    /// "<service>_<UL|DL>_<daytype>_<slot>"
    std::string name() const;
    friend bool operator==(const FeatureKey&, const FeatureKey&) = default;
};

/// Inverse of FeatureKey::name(). Returns nullopt for names that are not traffic columns.
std::optional<FeatureKey> parse_feature_name(std::string_view name);

std::size_t feature_count(std::size_t n_services, std::size_t n_day_types, std::size_t n_directions,
                          std::size_t n_slots);

/// Canonical ordering: services in configured order, then direction (UL, DL), then day
/// type (Friday, Saturday, Sunday, Weekday), then slot 0..11.
std::vector<FeatureKey> feature_keys(std::span<const std::string> services);

/// Tiles x features mean slot volumes.
struct FeatureMatrix {
    std::vector<TileId> tile_ids;
    std::vector<FeatureKey> keys;
    std::vector<double> values;         // row-major
    std::vector<std::uint8_t> imputed;  // row-major, 1 where no day contributed

    std::size_t rows() const noexcept { return tile_ids.size(); }
    std::size_t cols() const noexcept { return keys.size(); }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
    std::optional<std::size_t> column_of(const FeatureKey& key) const;
    std::size_t imputed_count() const;
};

FeatureMatrix build_feature_matrix(const AccumulatorSet& accumulators, std::span<const std::string> services,
                                   const CityGrid& grid);

/// "tile_id,<feature names...>"; imputation flags are not stored.
std::string write_feature_matrix_csv(const FeatureMatrix& fm);
FeatureMatrix read_feature_matrix_csv(std::string_view bytes);

inline constexpr std::string_view kNightColumn = "night_population";

/// Features aligned with a non-negative target; optionally with the night population as an
/// extra last feature column.
struct Dataset {
    std::vector<TileId> tile_ids;
    std::vector<std::string> feature_names;
    std::vector<double> x;  // row-major, rows x feature_names.size()
    std::vector<double> target;
    bool has_night_column = false;

    std::size_t rows() const noexcept { return tile_ids.size(); }
    std::size_t cols() const noexcept { return feature_names.size(); }
    std::span<const double> row(std::size_t r) const { return {x.data() + r * cols(), cols()}; }
    double at(std::size_t r, std::size_t c) const { return x[r * cols() + c]; }
    std::optional<std::size_t> column_of(std::string_view name) const;
};

/// Aligns targets (and the optional night column) to the matrix rows by tile id.
Dataset attach_targets(const FeatureMatrix& fm, const PopulationVector& target,
                       const PopulationVector* night_extra = nullptr);

struct SplitFractions {
    double train = 0.4;
    double test = 0.4;
    double validation = 0.2;
};

/// Row indices (into the Dataset) of the three disjoint parts, each ascending.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::size_t> validation;
    SplitFractions fractions;
    std::uint64_t seed = 0;
};

/// Sorts tile ids, shuffles them with SplitMix64-driven Fisher-Yates, then cuts at
/// round(n*train) and round(n*(train+test)).
Split split_dataset(const Dataset& ds, SplitFractions fractions, std::uint64_t seed);

/// "tile_id,<features...>,target[,night_population]"
std::string write_dataset_csv(const Dataset& ds);
Dataset read_dataset_csv(std::string_view bytes);

/// Sidecar metadata: imputation flags, split seed and fractions.
nlohmann::json dataset_sidecar(const FeatureMatrix& fm, const Split& split);

}  // namespace tilepop
