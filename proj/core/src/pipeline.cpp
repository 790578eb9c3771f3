#include "tilepop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <memory>
#include <numeric>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"
#include "tilepop/raster_io.hpp"

namespace tilepop {

using nlohmann::json;

std::string_view model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Night:
            return "night";
        case ModelKind::Day:
            return "day";
        case ModelKind::DayGivenNight:
            return "day-given-night";
    }
    return "day";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "night") return ModelKind::Night;
    if (name == "day") return ModelKind::Day;
    if (name == "day-given-night") return ModelKind::DayGivenNight;
    throw ValidationError("unknown model '" + std::string(name) + "' (expected night, day or day-given-night)");
}

ModelRun run_model(ModelKind kind, const FeatureMatrix& features, const PopulationVector& target,
                   const PopulationVector* night, const SplitConfig& split_cfg, const TrainConfig& train_cfg) {
    if (kind == ModelKind::DayGivenNight && night == nullptr) {
        throw ValidationError("the day-given-night model needs the night population");
    }
    ModelRun run;
    run.kind = kind;
    run.dataset = attach_targets(features, target, kind == ModelKind::DayGivenNight ? night : nullptr);
    run.split = split_dataset(run.dataset, split_cfg.fractions, split_cfg.seed);
    TrainResult tr = train(run.dataset, run.split, train_cfg);
    run.ensemble = std::move(tr.ensemble);
    run.eval = std::move(tr.report);

    if (!run.split.validation.empty()) {
        std::vector<double> truth;
        for (std::size_t r : run.split.validation) truth.push_back(run.dataset.target[r]);
        const double mean_pred = std::max(0.0, std::exp(run.ensemble.base_score) - 1.0);
        run.baseline_rmsle = rmsle(std::vector<double>(truth.size(), mean_pred), truth);
    }
    run.gains = gain_importance(run.ensemble);
    run.shap = tree_shap(run.ensemble, run.dataset, run.split.validation);
    run.shap_local_error = local_accuracy_error(run.shap, run.ensemble, run.dataset, run.split.validation);
    return run;
}

json model_report_json(const ModelRun& run, std::size_t top_k, const json& exports) {
    json top = json::array();
    for (std::size_t i = 0; i < std::min(top_k, run.gains.size()); ++i) {
        const auto& g = run.gains[i];
        top.push_back({{"rank", i + 1}, {"feature", g.name}, {"gain", g.gain}, {"cumulative_share", g.cumulative_share}});
    }
    const auto& d = run.dataset;
    return {{"model", model_kind_name(run.kind)},
            {"target", run.kind == ModelKind::Night ? "night" : "day"},
            {"n_features", d.cols()},
            {"rows", {{"train", run.split.train.size()}, {"test", run.split.test.size()},
                      {"validation", run.split.validation.size()}}},
            {"rmsle", {{"train", run.eval.rmsle_train}, {"test", run.eval.rmsle_test},
                       {"validation", run.eval.rmsle_validation}}},
            {"baseline_rmsle_validation", run.baseline_rmsle},
            {"best_round", run.eval.best_round},
            {"n_trees", run.ensemble.trees.size()},
            {"base_score", run.ensemble.base_score},
            {"features_with_gain", run.gains.size()},
            {"top_gain", std::move(top)},
            {"shap",
             {{"variant", "path-dependent TreeSHAP (cover-weighted), z-space"},
              {"base_value", run.shap.base_value},
              {"rows_explained", run.shap.rows()},
              {"max_local_accuracy_error", run.shap_local_error}}},
            {"exports", exports}};
}

ChangeTable change_table(const std::vector<CityPopulation>& cities) {
    ChangeTable t;
    for (const auto& c : cities) {
        if (!std::isfinite(c.night) || !(c.night > 0.0)) {
            throw ValidationError("night population of " + c.city + " must be positive");
        }
        if (!std::isfinite(c.day) || c.day < 0.0) throw ValidationError("day population of " + c.city + " is invalid");
        ChangeRow r;
        r.city = c.city;
        r.night = c.night;
        r.day = c.day;
        r.percent = 100.0 * (c.day - c.night) / c.night;
        r.percent_rounded = std::round(r.percent * 10.0) / 10.0;
        t.push_back(r);
    }
    return t;
}

std::string change_table_markdown(const ChangeTable& table) {
    std::string out = "| City | Night | Day | Change |\n|---|---:|---:|---:|\n";
    char buf[128];
    for (const auto& r : table) {
        std::snprintf(buf, sizeof buf, "| %s | %.0f | %.0f | %+.1f%% |\n", r.city.c_str(), r.night, r.day,
                      r.percent_rounded);
        out += buf;
    }
    return out;
}

std::size_t DiffMap::increase_count() const {
    return static_cast<std::size_t>(std::count(increase.begin(), increase.end(), true));
}

std::size_t DiffMap::decrease_count() const {
    return static_cast<std::size_t>(std::count(decrease.begin(), decrease.end(), true));
}

DiffMap diff_map(const PopulationVector& night, const PopulationVector& day, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("diff map threshold must be positive");
    if (night.tile_ids != day.tile_ids || night.values.size() != day.values.size()) {
        throw DataError("night and day populations cover different tiles");
    }
    DiffMap m;
    m.tau = tau;
    m.tile_ids = night.tile_ids;
    m.increase.resize(night.size());
    m.decrease.resize(night.size());
    for (std::size_t i = 0; i < night.size(); ++i) {
        m.increase[i] = day.values[i] - night.values[i] > tau;
        m.decrease[i] = night.values[i] - day.values[i] > tau;
    }
    return m;
}

double mask_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size()) throw ValidationError("mask sizes differ");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string heatmap_export(const std::vector<TileId>& tile_ids, const std::vector<double>& values,
                           const CityGrid& grid, bool log_scale) {
    if (tile_ids.size() != values.size()) throw ValidationError("heatmap ids and values differ in length");
    json features = json::array();
    for (std::size_t i = 0; i < tile_ids.size(); ++i) {
        const double v = values[i];
        if (!(v >= 0.0)) throw ValidationError("heatmap values must be non-negative");
        const auto idx = grid.index_of(tile_ids[i]);
        if (!idx) throw DataError("tile " + std::to_string(tile_ids[i].value) + " is not in the grid");
        json ring = json::array();
        for (const LonLat& p : grid[*idx].ring) ring.push_back({p.lon, p.lat});
        json props = {{"tile_id", tile_ids[i].value}, {"v", v}};
        if (log_scale) props["v_log"] = std::log1p(v);
        features.push_back({{"type", "Feature"},
                            {"properties", std::move(props)},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({std::move(ring)})}}}});
    }
    return json{{"type", "FeatureCollection"}, {"features", std::move(features)}}.dump() + "\n";
}

std::string write_diffmap_csv(const DiffMap& m, const PopulationVector& night, const PopulationVector& day) {
    std::string out = "tile_id,night,day,delta,increase,decrease\n";
    for (std::size_t i = 0; i < m.tile_ids.size(); ++i) {
        out += std::to_string(m.tile_ids[i].value);
        out += ',';
        append_double(out, night.values[i]);
        out += ',';
        append_double(out, day.values[i]);
        out += ',';
        append_double(out, day.values[i] - night.values[i]);
        out += m.increase[i] ? ",1" : ",0";
        out += m.decrease[i] ? ",1\n" : ",0\n";
    }
    return out;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    try {
        c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
        if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
        if (j.contains("manifest")) {
            const json& m = j.at("manifest");
            if (m.is_string()) {
                c.manifest = manifest_from_json(json::parse(read_file(resolve(base_dir, m.get<std::string>()))));
            } else {
                c.manifest = manifest_from_json(m);
            }
        }
        if (j.contains("inputs")) {
            const json& in = j.at("inputs");
            c.geojson = resolve(base_dir, in.at("geojson").get<std::string>());
            c.traffic_dir = resolve(base_dir, in.at("traffic_dir").get<std::string>());
            c.night_raster = resolve(base_dir, in.at("night_raster").get<std::string>());
            c.day_raster = resolve(base_dir, in.at("day_raster").get<std::string>());
        }
        if (!c.synth && !j.contains("inputs")) throw ValidationError("run config needs either 'inputs' or 'synth'");
        if (!c.synth && !c.manifest) throw ValidationError("file inputs need a 'manifest'");
        if (j.contains("downscale")) c.conserve_mass = j.at("downscale").value("conserve_mass", c.conserve_mass);
        if (j.contains("split")) {
            const json& s = j.at("split");
            c.split.seed = s.value("seed", c.split.seed);
            c.split.fractions.train = s.value("train", c.split.fractions.train);
            c.split.fractions.test = s.value("test", c.split.fractions.test);
            c.split.fractions.validation = s.value("validation", c.split.fractions.validation);
        }
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        if (j.contains("diffmap")) c.tau = j.at("diffmap").value("tau", c.tau);
        if (j.contains("models")) {
            c.models.clear();
            for (const json& m : j.at("models")) c.models.push_back(parse_model_kind(m.get<std::string>()));
        }
        c.top_k = j.value("top_k", c.top_k);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid run config: ") + e.what());
    }
    if (!(c.tau > 0.0)) throw ValidationError("diffmap tau must be positive");
    return c;
}

namespace {

json run_config_echo(const RunConfig& c, const IngestManifest& manifest) {
    json models = json::array();
    for (ModelKind k : c.models) models.push_back(model_kind_name(k));
    json j = {{"manifest", manifest_to_json(manifest)},
              {"downscale", {{"conserve_mass", c.conserve_mass}}},
              {"split",
               {{"seed", c.split.seed},
                {"train", c.split.fractions.train},
                {"test", c.split.fractions.test},
                {"validation", c.split.fractions.validation}}},
              {"train", train_config_to_json(c.train)},
              {"diffmap", {{"tau", c.tau}}},
              {"models", std::move(models)},
              {"top_k", c.top_k}};
    if (c.synth) j["synth"] = synth_config_to_json(*c.synth);
    return j;
}

json file_digest(const std::filesystem::path& p, const std::string& bytes) {
    return {{"file", p.filename().string()}, {"bytes", bytes.size()}, {"fnv1a64", hex_digest(fnv1a64(bytes))}};
}

std::string safe_name(std::string_view s) {
    std::string out(s);
    for (char& ch : out) {
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) ch = '_';
    }
    return out;
}

}  // namespace

RunSummary run_all(const RunConfig& cfg) {
    RunSummary summary;
    const auto& out = cfg.output_dir;
    std::filesystem::create_directories(out);

    // Inputs.
    std::optional<SynthCity> synth_city;
    CityGrid grid;
    IngestManifest manifest;
    CoarseRaster night_raster;
    CoarseRaster day_raster;
    json digests = json::object();
    std::unique_ptr<TrafficSource> source;
    if (cfg.synth) {
        synth_city = gen_city(*cfg.synth);
        grid = synth_city->grid;
        manifest = cfg.manifest ? *cfg.manifest : cfg.synth->manifest();
        night_raster = gen_coarse_raster(*synth_city, *cfg.synth, Period::Night);
        day_raster = gen_coarse_raster(*synth_city, *cfg.synth, Period::Day);
        source = std::make_unique<SynthTrafficSource>(*synth_city, *cfg.synth);
        digests["synth_config"] = hex_digest(fnv1a64(synth_config_to_json(*cfg.synth).dump()));
    } else {
        manifest = *cfg.manifest;
        const std::string geo = read_file(cfg.geojson);
        grid = parse_city_geojson(geo, {.id_property = "tile_id", .city = manifest.city});
        const std::string nr = read_file(cfg.night_raster);
        const std::string dr = read_file(cfg.day_raster);
        night_raster = read_esri_ascii(nr);
        day_raster = read_esri_ascii(dr);
        source = std::make_unique<DirectoryTrafficSource>(cfg.traffic_dir);
        digests["geojson"] = file_digest(cfg.geojson, geo);
        digests["night_raster"] = file_digest(cfg.night_raster, nr);
        digests["day_raster"] = file_digest(cfg.day_raster, dr);
        // Traffic files are fingerprinted by name and size to avoid a second full read.
        std::vector<std::pair<std::string, std::uintmax_t>> listing;
        for (const auto& entry : std::filesystem::directory_iterator(cfg.traffic_dir)) {
            if (entry.is_regular_file()) listing.emplace_back(entry.path().filename().string(), entry.file_size());
        }
        std::sort(listing.begin(), listing.end());
        std::string flat;
        for (const auto& [name, size] : listing) flat += name + ":" + std::to_string(size) + "\n";
        digests["traffic_listing"] = {{"files", listing.size()}, {"fnv1a64", hex_digest(fnv1a64(flat))}};
    }

    const IngestResult ingest = ingest_city(manifest, grid.tile_ids(), *source, cfg.threads);
    const FeatureMatrix fm = build_feature_matrix(ingest.accumulators, manifest.services, grid);
    const DownscaleResult night_ds = downscale_population(night_raster, grid, Period::Night, cfg.conserve_mass);
    const DownscaleResult day_ds = downscale_population(day_raster, grid, Period::Day, cfg.conserve_mass);
    const PopulationVector& night = night_ds.population;
    const PopulationVector& day = day_ds.population;
    write_file(out / "population_night.csv", write_population_csv(night));
    write_file(out / "population_day.csv", write_population_csv(day));

    json report;
    report["city"] = manifest.city;
    report["tiles"] = grid.size();
    report["ingest"] = ingest_report_to_json(ingest.report);
    report["features"] = {{"columns", fm.cols()}, {"imputed_cells", fm.imputed_count()}};
    auto ds_report = [](const DownscaleReport& r) {
        return json{{"nodata_filled", r.nodata_filled},
                    {"tiles_outside_hull", r.tiles_outside_hull},
                    {"tiles_clamped", r.tiles_clamped},
                    {"conserve_mass", r.conserve_mass}};
    };
    report["downscale"] = {{"night", ds_report(night_ds.report)}, {"day", ds_report(day_ds.report)}};

    json models = json::array();
    for (ModelKind kind : cfg.models) {
        const PopulationVector& target = kind == ModelKind::Night ? night : day;
        ModelRun run = run_model(kind, fm, target, &night, cfg.split, cfg.train);
        const std::string k(model_kind_name(kind));
        json exports = {{"ensemble", "model_" + k + ".json"}, {"shap", "shap_" + k + ".csv"}};
        write_file(out / ("model_" + k + ".json"), ensemble_to_json(run.ensemble).dump(1) + "\n");
        write_file(out / ("eval_" + k + ".json"), eval_report_to_json(run.eval).dump(1) + "\n");
        write_file(out / ("shap_" + k + ".csv"), write_shap_csv(run.shap));
        json deps = json::array();
        for (std::size_t i = 0; i < std::min<std::size_t>(3, run.gains.size()); ++i) {
            const std::string& feat = run.gains[i].name;
            const std::string file = "dependence_" + k + "_" + safe_name(feat) + ".csv";
            write_file(out / file, write_dependence_csv(dependence_series(run.shap, run.dataset, feat)));
            deps.push_back({{"feature", feat}, {"file", file}});
        }
        exports["dependence"] = std::move(deps);
        json mr = model_report_json(run, cfg.top_k, exports);
        if (cfg.synth) {
            std::size_t informative = 0;
            for (std::size_t i = 0; i < std::min<std::size_t>(5, run.gains.size()); ++i) {
                const auto key = parse_feature_name(run.gains[i].name);
                if (key && is_informative_key(*key)) ++informative;
            }
            mr["synth_informative_in_top5"] = informative;
        }
        models.push_back(std::move(mr));
        summary.models.push_back(std::move(run));
    }
    report["models"] = std::move(models);

    summary.diff = diff_map(night, day, cfg.tau);
    write_file(out / "diffmap.csv", write_diffmap_csv(summary.diff, night, day));
    json diff = {{"tau", cfg.tau},
                 {"criterion", "per-tile absolute difference above tau persons"},
                 {"increase_tiles", summary.diff.increase_count()},
                 {"decrease_tiles", summary.diff.decrease_count()},
                 {"file", "diffmap.csv"}};
    if (synth_city) {
        const auto& zones = synth_city->truth.zones;
        std::vector<bool> center(zones.size());
        std::vector<bool> ring(zones.size());
        for (std::size_t i = 0; i < zones.size(); ++i) {
            center[i] = zones[i] == Zone::Center;
            ring[i] = zones[i] == Zone::Ring;
        }
        summary.iou_increase = mask_iou(summary.diff.increase, center);
        summary.iou_decrease = mask_iou(summary.diff.decrease, ring);
        const DiffMap truth_diff = diff_map(synth_city->truth.population(Period::Night),
                                            synth_city->truth.population(Period::Day), cfg.tau);
        summary.truth_iou_increase = mask_iou(truth_diff.increase, center);
        summary.truth_iou_decrease = mask_iou(truth_diff.decrease, ring);
        diff["zone_iou"] = {{"downscaled", {{"increase", *summary.iou_increase}, {"decrease", *summary.iou_decrease}}},
                            {"truth", {{"increase", *summary.truth_iou_increase},
                                       {"decrease", *summary.truth_iou_decrease}}}};
    }
    report["diffmap"] = std::move(diff);

    write_file(out / "heatmap_night.geojson", heatmap_export(night.tile_ids, night.values, grid, true));
    write_file(out / "heatmap_day.geojson", heatmap_export(day.tile_ids, day.values, grid, true));

    double raster_night = 0.0;
    double raster_day = 0.0;
    for (double v : night_raster.values) raster_night += night_raster.is_nodata(v) ? 0.0 : v;
    for (double v : day_raster.values) raster_day += day_raster.is_nodata(v) ? 0.0 : v;
    const ChangeTable table = change_table({{manifest.city, night.total(), day.total()}});
    report["change_table"] = json::array();
    for (const auto& r : table) {
        report["change_table"].push_back({{"city", r.city},
                                          {"night", r.night},
                                          {"day", r.day},
                                          {"percent", r.percent},
                                          {"percent_rounded", r.percent_rounded},
                                          {"raster_night", raster_night},
                                          {"raster_day", raster_day}});
    }

    const json run_manifest = {{"config", run_config_echo(cfg, manifest)}, {"inputs", digests}};
    write_file(out / "run_manifest.json", run_manifest.dump(2) + "\n");
    write_file(out / "report.json", report.dump(2) + "\n");
    write_file(out / "report.md", report_markdown(report));
    summary.report = std::move(report);
    return summary;
}

std::string report_markdown(const json& report) {
    std::string md = "# Population estimation report: " + report.value("city", std::string("?")) + "\n\n";
    char buf[256];
    md += "Tiles: " + std::to_string(report.value("tiles", 0)) + "\n\n";
    if (report.contains("models")) {
        md += "## Models\n\n| Model | Features | RMSLE (validation) | Baseline RMSLE | Trees | Top feature | Top share |\n";
        md += "|---|---:|---:|---:|---:|---|---:|\n";
        for (const json& m : report.at("models")) {
            std::string top = "-";
            double share = 0.0;
            if (!m.at("top_gain").empty()) {
                top = m.at("top_gain")[0].at("feature").get<std::string>();
                share = m.at("top_gain")[0].at("cumulative_share").get<double>();
            }
            std::snprintf(buf, sizeof buf, "| %s | %zu | %.4f | %.4f | %zu | %s | %.1f%% |\n",
                          m.at("model").get<std::string>().c_str(), m.at("n_features").get<std::size_t>(),
                          m.at("rmsle").at("validation").get<double>(), m.at("baseline_rmsle_validation").get<double>(),
                          m.at("n_trees").get<std::size_t>(), top.c_str(), 100.0 * share);
            md += buf;
        }
        md += "\nSHAP values are path-dependent TreeSHAP attributions in log space, computed on the validation tiles.\n";
        for (const json& m : report.at("models")) {
            md += "\n### " + m.at("model").get<std::string>() + ": top features by gain\n\n";
            md += "| Rank | Feature | Gain | Cumulative share |\n|---:|---|---:|---:|\n";
            for (const json& g : m.at("top_gain")) {
                std::snprintf(buf, sizeof buf, "| %zu | %s | %.6g | %.1f%% |\n", g.at("rank").get<std::size_t>(),
                              g.at("feature").get<std::string>().c_str(), g.at("gain").get<double>(),
                              100.0 * g.at("cumulative_share").get<double>());
                md += buf;
            }
        }
    }
    if (report.contains("change_table")) {
        md += "\n## Night and day population\n\n| City | Night | Day | Change |\n|---|---:|---:|---:|\n";
        for (const json& r : report.at("change_table")) {
            std::snprintf(buf, sizeof buf, "| %s | %.0f | %.0f | %+.1f%% |\n", r.at("city").get<std::string>().c_str(),
                          r.at("night").get<double>(), r.at("day").get<double>(), r.at("percent_rounded").get<double>());
            md += buf;
        }
    }
    if (report.contains("diffmap")) {
        const json& d = report.at("diffmap");
        std::snprintf(buf, sizeof buf,
                      "\n## Difference map\n\nThreshold: %.6g persons per tile (a stand-in for \"significant\").\n"
                      "Tiles gaining: %zu. Tiles losing: %zu.\n",
                      d.at("tau").get<double>(), d.at("increase_tiles").get<std::size_t>(),
                      d.at("decrease_tiles").get<std::size_t>());
        md += buf;
        if (d.contains("zone_iou")) {
            const json& z = d.at("zone_iou");
            std::snprintf(buf, sizeof buf,
                          "Agreement with generator zones (IoU): downscaled %.3f / %.3f, truth %.3f / %.3f "
                          "(increase / decrease).\n",
                          z.at("downscaled").at("increase").get<double>(), z.at("downscaled").at("decrease").get<double>(),
                          z.at("truth").at("increase").get<double>(), z.at("truth").at("decrease").get<double>());
            md += buf;
        }
    }
    return md;
}

}  // namespace tilepop
