#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tilepop/explain.hpp"
#include "tilepop/features.hpp"
#include "tilepop/gbtree.hpp"
#include "tilepop/popgrid.hpp"
#include "tilepop/synth.hpp"

namespace tilepop {

/// Night: traffic -> night population. Day: traffic -> day population.
/// DayGivenNight: traffic plus the night population -> day population.
enum class ModelKind { Night, Day, DayGivenNight };
std::string_view model_kind_name(ModelKind k);
ModelKind parse_model_kind(std::string_view name);

struct SplitConfig {
    SplitFractions fractions;
    std::uint64_t seed = 7;
};

struct ModelRun {
    ModelKind kind = ModelKind::Day;
    Dataset dataset;
    Split split;
    Ensemble ensemble;
    EvalReport eval;
    double baseline_rmsle = 0.0;  // predict-the-training-mean on the validation split
    std::vector<FeatureGain> gains;
    ShapMatrix shap;              // validation rows
    double shap_local_error = 0.0;
};

/// Builds the dataset for `kind`, splits, trains, and explains the validation rows.
/// Throws ValidationError when DayGivenNight is requested without a night population.
ModelRun run_model(ModelKind kind, const FeatureMatrix& features, const PopulationVector& target,
                   const PopulationVector* night, const SplitConfig& split_cfg, const TrainConfig& train_cfg);

/// Report of one model run; `exports` names the files written next to it.
nlohmann::json model_report_json(const ModelRun& run, std::size_t top_k, const nlohmann::json& exports);

struct CityPopulation {
    std::string city;
    double night = 0.0;
    double day = 0.0;
};

struct ChangeRow {
    std::string city;
    double night = 0.0;
    double day = 0.0;
    double percent = 0.0;          // 100 * (day - night) / night
    double percent_rounded = 0.0;  // to one decimal
};

using ChangeTable = std::vector<ChangeRow>;

/// Throws ValidationError on a non-positive or non-finite night population.
ChangeTable change_table(const std::vector<CityPopulation>& cities);
std::string change_table_markdown(const ChangeTable& table);

struct DiffMap {
    std::vector<TileId> tile_ids;
    std::vector<bool> increase;  // day - night > tau
    std::vector<bool> decrease;  // night - day > tau
    double tau = 5.0;

    std::size_t increase_count() const;
    std::size_t decrease_count() const;
};

/// Throws DataError when the two vectors do not cover the same tiles in the same order,
/// ValidationError when tau is not positive.
DiffMap diff_map(const PopulationVector& night, const PopulationVector& day, double tau = 5.0);

/// "tile_id,night,day,delta,increase,decrease"
std::string write_diffmap_csv(const DiffMap& m, const PopulationVector& night, const PopulationVector& day);

/// |a and b| / |a or b|; 1 when both are empty.
double mask_iou(const std::vector<bool>& a, const std::vector<bool>& b);

/// FeatureCollection of tile polygons with properties tile_id, v and, when log_scale, v_log = ln(1+v).
std::string heatmap_export(const std::vector<TileId>& tile_ids, const std::vector<double>& values,
                           const CityGrid& grid, bool log_scale);

/// Full run: inputs (files or an in-memory synthetic city), ingest, downscale, models,
/// reports and exports under output_dir.
struct RunConfig {
    std::filesystem::path output_dir = "out";
    std::optional<IngestManifest> manifest;  // required for file inputs
    std::filesystem::path geojson;
    std::filesystem::path traffic_dir;
    std::filesystem::path night_raster;
    std::filesystem::path day_raster;
    std::optional<SynthConfig> synth;
    bool conserve_mass = false;
    SplitConfig split;
    TrainConfig train;
    double tau = 5.0;
    std::vector<ModelKind> models{ModelKind::Night, ModelKind::Day, ModelKind::DayGivenNight};
    std::size_t top_k = 20;
    unsigned threads = 1;
};

/// Relative paths are resolved against base_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct RunSummary {
    nlohmann::json report;
    std::vector<ModelRun> models;
    DiffMap diff;
    std::optional<double> iou_increase;  // vs generator zones (synthetic inputs)
    std::optional<double> iou_decrease;
    std::optional<double> truth_iou_increase;
    std::optional<double> truth_iou_decrease;
};

RunSummary run_all(const RunConfig& cfg);

std::string report_markdown(const nlohmann::json& report);

}  // namespace tilepop
