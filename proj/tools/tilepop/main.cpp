#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tilepop/error.hpp"
#include "tilepop/explain.hpp"
#include "tilepop/features.hpp"
#include "tilepop/gbtree.hpp"
#include "tilepop/grid_geo.hpp"
#include "tilepop/ingest.hpp"
#include "tilepop/io.hpp"
#include "tilepop/pipeline.hpp"
#include "tilepop/popgrid.hpp"
#include "tilepop/raster_io.hpp"
#include "tilepop/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tilepop;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitData = 3;

json read_json_file(const fs::path& p) {
    const std::string bytes = read_file(p);
    try {
        return json::parse(bytes);
    } catch (const json::exception& e) {
        throw ValidationError(p.string() + ": " + e.what());
    }
}

// Accepts a bare manifest or a run config holding one.
IngestManifest load_manifest(const fs::path& p) {
    json j = read_json_file(p);
    if (j.contains("manifest")) {
        const json& m = j.at("manifest");
        if (m.is_string()) return manifest_from_json(read_json_file(p.parent_path() / m.get<std::string>()));
        return manifest_from_json(m);
    }
    if (j.contains("synth")) return synth_config_from_json(j.at("synth")).manifest();
    return manifest_from_json(j);
}

CityGrid load_grid(const fs::path& p, const std::string& id_property) {
    GeoJsonOptions opt;
    opt.id_property = id_property;
    return parse_city_geojson(read_file(p), opt);
}

void emit(const std::string& out, const std::string& bytes) {
    if (out.empty() || out == "-") {
        std::fwrite(bytes.data(), 1, bytes.size(), stdout);
    } else {
        write_file(out, bytes);
    }
}

struct CommonOptions {
    std::string id_property = "tile_id";
    unsigned threads = 1;
};

// --- aggregate --------------------------------------------------------------

struct AggregateOptions {
    std::string manifest, geojson, traffic_dir, out = "accumulators.json", report;
};

void run_aggregate(const AggregateOptions& o, const CommonOptions& c) {
    const IngestManifest m = load_manifest(o.manifest);
    const CityGrid grid = load_grid(o.geojson, c.id_property);
    const DirectoryTrafficSource src(o.traffic_dir);
    const IngestResult r = ingest_city(m, grid.tile_ids(), src, c.threads);
    write_file(o.out, accumulators_to_json(r.accumulators).dump() + "\n");
    const std::string rep = ingest_report_to_json(r.report).dump(2) + "\n";
    if (!o.report.empty()) write_file(o.report, rep);
    std::cerr << "read " << r.report.files_read << " files, " << r.report.outages.size() << " outage days dropped\n";
}

// --- downscale --------------------------------------------------------------

struct DownscaleOptions {
    std::string raster, geojson, period = "night", out;
    bool conserve = false;
};

void run_downscale(const DownscaleOptions& o, const CommonOptions& c) {
    const CoarseRaster raster = read_esri_ascii(read_file(o.raster));
    const CityGrid grid = load_grid(o.geojson, c.id_property);
    const DownscaleResult r = downscale_population(raster, grid, parse_period(o.period), o.conserve);
    emit(o.out, write_population_csv(r.population));
    std::cerr << "tiles " << r.population.size() << ", outside hull " << r.report.tiles_outside_hull
              << ", clamped " << r.report.tiles_clamped << ", nodata filled " << r.report.nodata_filled << "\n";
}

// --- features ---------------------------------------------------------------

struct FeaturesOptions {
    std::string accumulators, manifest, geojson, out;
};

void run_features(const FeaturesOptions& o, const CommonOptions& c) {
    const AccumulatorSet acc = accumulators_from_json(read_json_file(o.accumulators));
    const IngestManifest m = load_manifest(o.manifest);
    const CityGrid grid = load_grid(o.geojson, c.id_property);
    const FeatureMatrix fm = build_feature_matrix(acc, m.services, grid);
    emit(o.out, write_feature_matrix_csv(fm));
    std::cerr << fm.rows() << " tiles x " << fm.cols() << " features, " << fm.imputed_count() << " imputed\n";
}

// --- train ------------------------------------------------------------------

struct TrainOptions {
    std::string model = "day", features, target, night, config, out_dir = ".";
    std::optional<std::uint64_t> split_seed;
};

void run_train(const TrainOptions& o) {
    const ModelKind kind = parse_model_kind(o.model);
    SplitConfig split_cfg;
    TrainConfig train_cfg;
    if (!o.config.empty()) {
        const json j = read_json_file(o.config);
        try {
            if (j.contains("train")) train_cfg = train_config_from_json(j.at("train"));
            if (j.contains("split")) {
                const json& s = j.at("split");
                split_cfg.seed = s.value("seed", split_cfg.seed);
                split_cfg.fractions.train = s.value("train", split_cfg.fractions.train);
                split_cfg.fractions.test = s.value("test", split_cfg.fractions.test);
                split_cfg.fractions.validation = s.value("validation", split_cfg.fractions.validation);
            }
        } catch (const json::exception& e) {
            throw ValidationError(std::string("invalid config: ") + e.what());
        }
    }
    if (o.split_seed) split_cfg.seed = *o.split_seed;

    const FeatureMatrix fm = read_feature_matrix_csv(read_file(o.features));
    const Period period = kind == ModelKind::Night ? Period::Night : Period::Day;
    const PopulationVector target = read_population_csv(read_file(o.target), period);
    std::optional<PopulationVector> night;
    if (!o.night.empty()) night = read_population_csv(read_file(o.night), Period::Night);
    if (kind == ModelKind::DayGivenNight && !night) throw ValidationError("--model day-given-night needs --night");

    const ModelRun run = run_model(kind, fm, target, night ? &*night : nullptr, split_cfg, train_cfg);
    const std::string k(model_kind_name(kind));
    const fs::path dir(o.out_dir);
    write_file(dir / ("model_" + k + ".json"), ensemble_to_json(run.ensemble).dump() + "\n");
    write_file(dir / ("eval_" + k + ".json"), eval_report_to_json(run.eval).dump(2) + "\n");
    write_file(dir / ("dataset_" + k + ".csv"), write_dataset_csv(run.dataset));
    write_file(dir / ("dataset_" + k + ".json"), dataset_sidecar(fm, run.split).dump(2) + "\n");
    std::cout << k << ": rmsle train " << run.eval.rmsle_train << " test " << run.eval.rmsle_test << " validation "
              << run.eval.rmsle_validation << " (baseline " << run.baseline_rmsle << "), trees "
              << run.ensemble.trees.size() << "\n";
}

// --- explain ----------------------------------------------------------------

struct ExplainOptions {
    std::string model, dataset, out, dependence_dir = ".";
    std::vector<std::string> dependence;
};

void run_explain(const ExplainOptions& o) {
    const Ensemble e = ensemble_from_json(read_json_file(o.model));
    const Dataset ds = read_dataset_csv(read_file(o.dataset));
    if (ds.feature_names != e.feature_names) throw DataError("dataset columns do not match the model features");
    std::vector<std::size_t> rows(ds.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const ShapMatrix sm = tree_shap(e, ds, rows);
    emit(o.out, write_shap_csv(sm));
    for (const auto& name : o.dependence) {
        write_file(fs::path(o.dependence_dir) / ("dependence_" + name + ".csv"),
                   write_dependence_csv(dependence_series(sm, ds, name)));
    }
    std::cerr << "explained " << sm.rows() << " rows, local accuracy error " << local_accuracy_error(sm, e, ds, rows)
              << "\n";
}

// --- report -----------------------------------------------------------------

struct ReportOptions {
    std::string cities, run_dir, out;
    bool as_json = false;
};

std::vector<CityPopulation> read_cities_csv(std::string_view bytes) {
    std::vector<CityPopulation> out;
    for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
        if (line.empty() || line_no == 1) return;
        auto f = split_fields(line, ',');
        CityPopulation c;
        if (f.size() != 3 || !parse_double(f[1], c.night) || !parse_double(f[2], c.day)) {
            throw DataError("cities CSV line " + std::to_string(line_no) + ": expected city,night,day");
        }
        c.city = std::string(f[0]);
        out.push_back(std::move(c));
    });
    return out;
}

void run_report(const ReportOptions& o) {
    if (o.cities.empty() == o.run_dir.empty()) throw ValidationError("give exactly one of --cities or --run-dir");
    if (!o.run_dir.empty()) {
        const json report = read_json_file(fs::path(o.run_dir) / "report.json");
        emit(o.out, report_markdown(report));
        return;
    }
    const ChangeTable t = change_table(read_cities_csv(read_file(o.cities)));
    if (!o.as_json) {
        emit(o.out, change_table_markdown(t));
        return;
    }
    json rows = json::array();
    for (const auto& r : t) {
        rows.push_back({{"city", r.city}, {"night", r.night}, {"day", r.day}, {"percent", r.percent},
                        {"percent_rounded", r.percent_rounded}});
    }
    emit(o.out, rows.dump(2) + "\n");
}

// --- diffmap / heatmap -------------------------------------------------------

struct DiffmapOptions {
    std::string night, day, out;
    double tau = 5.0;
};

void run_diffmap(const DiffmapOptions& o) {
    const PopulationVector night = read_population_csv(read_file(o.night), Period::Night);
    const PopulationVector day = read_population_csv(read_file(o.day), Period::Day);
    const DiffMap m = diff_map(night, day, o.tau);
    emit(o.out, write_diffmap_csv(m, night, day));
    std::cerr << "increase " << m.increase_count() << " tiles, decrease " << m.decrease_count() << " tiles\n";
}

struct HeatmapOptions {
    std::string values, geojson, out;
    bool log_scale = false;
};

void run_heatmap(const HeatmapOptions& o, const CommonOptions& c) {
    const PopulationVector p = read_population_csv(read_file(o.values), Period::Night);
    const CityGrid grid = load_grid(o.geojson, c.id_property);
    emit(o.out, heatmap_export(p.tile_ids, p.values, grid, o.log_scale));
}

// --- synth-gen / run-all -----------------------------------------------------

struct SynthOptions {
    std::string config, out_dir = "synth";
    std::optional<std::uint64_t> seed;
    bool no_traffic = false;
};

void run_synth(const SynthOptions& o, const CommonOptions& c) {
    SynthConfig cfg;
    if (!o.config.empty()) {
        const json j = read_json_file(o.config);
        cfg = synth_config_from_json(j.contains("synth") ? j.at("synth") : j);
    }
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    const SynthCity city = gen_city(cfg);
    const SynthFiles f = write_synth_bundle(city, cfg, o.out_dir, !o.no_traffic, c.threads);
    std::cerr << "wrote " << city.grid.size() << " tiles to " << f.geojson.parent_path().string() << "\n";
}

struct RunAllOptions {
    std::string config, output_dir;
    std::optional<unsigned> threads;  // overrides the config when set
};

void run_run_all(const RunAllOptions& o) {
    const fs::path cfg_path(o.config);
    RunConfig cfg = run_config_from_json(read_json_file(cfg_path), cfg_path.parent_path());
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (o.threads) cfg.threads = *o.threads;
    const RunSummary s = run_all(cfg);
    for (const auto& m : s.models) {
        std::cout << model_kind_name(m.kind) << ": validation rmsle " << m.eval.rmsle_validation << " (baseline "
                  << m.baseline_rmsle << ")";
        if (!m.gains.empty()) std::cout << ", top feature " << m.gains.front().name;
        std::cout << "\n";
    }
    std::cout << "report: " << (cfg.output_dir / "report.md").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tilepop: population estimation from mobile traffic"};
    app.require_subcommand(1);
    app.fallthrough();
    CommonOptions common;
    app.add_option("--id-property", common.id_property, "GeoJSON property holding the tile id");
    app.add_option("--threads", common.threads, "Worker threads for ingest and synth output")->check(CLI::PositiveNumber);

    AggregateOptions ag;
    auto* c_ag = app.add_subcommand("aggregate", "Fold traffic files into per-channel slot accumulators");
    c_ag->add_option("--manifest", ag.manifest, "Manifest JSON (or a run config holding one)")->required();
    c_ag->add_option("--geojson", ag.geojson, "City tile GeoJSON")->required();
    c_ag->add_option("--traffic-dir", ag.traffic_dir, "Directory of traffic files")->required();
    c_ag->add_option("-o,--out", ag.out, "Accumulator JSON output");
    c_ag->add_option("--report", ag.report, "Ingest report JSON output");

    DownscaleOptions ds;
    auto* c_ds = app.add_subcommand("downscale", "Interpolate a coarse raster onto the tile grid");
    c_ds->add_option("--raster", ds.raster, "ESRI ASCII grid")->required();
    c_ds->add_option("--geojson", ds.geojson, "City tile GeoJSON")->required();
    c_ds->add_option("--period", ds.period, "night or day")->check(CLI::IsMember({"night", "day"}));
    c_ds->add_flag("--conserve-mass", ds.conserve, "Rescale tiles so each coarse cell keeps its count");
    c_ds->add_option("-o,--out", ds.out, "Population CSV output (default stdout)");

    FeaturesOptions fe;
    auto* c_fe = app.add_subcommand("features", "Build the tile x feature matrix CSV");
    c_fe->add_option("--accumulators", fe.accumulators, "Accumulator JSON from aggregate")->required();
    c_fe->add_option("--manifest", fe.manifest, "Manifest JSON (service order)")->required();
    c_fe->add_option("--geojson", fe.geojson, "City tile GeoJSON")->required();
    c_fe->add_option("-o,--out", fe.out, "Feature CSV output (default stdout)");

    TrainOptions tr;
    auto* c_tr = app.add_subcommand("train", "Train a gradient-boosted model");
    c_tr->add_option("--model", tr.model, "night, day or day-given-night")
        ->check(CLI::IsMember({"night", "day", "day-given-night"}));
    c_tr->add_option("--features", tr.features, "Feature CSV")->required();
    c_tr->add_option("--target", tr.target, "Target population CSV")->required();
    c_tr->add_option("--night", tr.night, "Night population CSV (extra feature for day-given-night)");
    c_tr->add_option("--config", tr.config, "JSON with optional 'train' and 'split' sections");
    c_tr->add_option("--split-seed", tr.split_seed, "Override the split seed");
    c_tr->add_option("--out-dir", tr.out_dir, "Output directory");

    ExplainOptions ex;
    auto* c_ex = app.add_subcommand("explain", "TreeSHAP attributions for every dataset row");
    c_ex->add_option("--model", ex.model, "Model JSON")->required();
    c_ex->add_option("--dataset", ex.dataset, "Dataset CSV written by train")->required();
    c_ex->add_option("-o,--out", ex.out, "SHAP CSV output (default stdout)");
    c_ex->add_option("--dependence", ex.dependence, "Feature name for a dependence series (repeatable)");
    c_ex->add_option("--dependence-dir", ex.dependence_dir, "Directory for dependence CSVs");

    ReportOptions re;
    auto* c_re = app.add_subcommand("report", "Night/day change table, or re-render a run report");
    c_re->add_option("--cities", re.cities, "CSV city,night,day");
    c_re->add_option("--run-dir", re.run_dir, "Output directory of run-all");
    c_re->add_flag("--json", re.as_json, "Change table as JSON");
    c_re->add_option("-o,--out", re.out, "Output file (default stdout)");

    DiffmapOptions dm;
    auto* c_dm = app.add_subcommand("diffmap", "Tiles with a day-night change above tau");
    c_dm->add_option("--night", dm.night, "Night population CSV")->required();
    c_dm->add_option("--day", dm.day, "Day population CSV")->required();
    c_dm->add_option("--tau", dm.tau, "Threshold in persons per tile");
    c_dm->add_option("-o,--out", dm.out, "CSV output (default stdout)");

    HeatmapOptions hm;
    auto* c_hm = app.add_subcommand("heatmap", "GeoJSON heatmap of per-tile values");
    c_hm->add_option("--values", hm.values, "CSV tile_id,value")->required();
    c_hm->add_option("--geojson", hm.geojson, "City tile GeoJSON")->required();
    c_hm->add_flag("--log", hm.log_scale, "Add v_log = ln(1+v)");
    c_hm->add_option("-o,--out", hm.out, "GeoJSON output (default stdout)");

    SynthOptions sy;
    auto* c_sy = app.add_subcommand("synth-gen", "Write a synthetic city with traffic, rasters and truth");
    c_sy->add_option("--config", sy.config, "Synth config JSON (or a run config with 'synth')");
    c_sy->add_option("--seed", sy.seed, "Override the seed");
    c_sy->add_option("--out-dir", sy.out_dir, "Output directory");
    c_sy->add_flag("--no-traffic", sy.no_traffic, "Skip traffic files");

    RunAllOptions ra;
    auto* c_ra = app.add_subcommand("run-all", "Full pipeline from one config file");
    c_ra->add_option("--config", ra.config, "Run config JSON")->required();
    c_ra->add_option("--output-dir", ra.output_dir, "Override output_dir");

    try {
        app.parse(argc, argv);
        if (app.get_option("--threads")->count() > 0) ra.threads = common.threads;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        if (c_ag->parsed()) run_aggregate(ag, common);
        else if (c_ds->parsed()) run_downscale(ds, common);
        else if (c_fe->parsed()) run_features(fe, common);
        else if (c_tr->parsed()) run_train(tr);
        else if (c_ex->parsed()) run_explain(ex);
        else if (c_re->parsed()) run_report(re);
        else if (c_dm->parsed()) run_diffmap(dm);
        else if (c_hm->parsed()) run_heatmap(hm, common);
        else if (c_sy->parsed()) run_synth(sy, common);
        else if (c_ra->parsed()) run_run_all(ra);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
