#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "city_table.hpp"
#include "fixtures.hpp"
#include "tilepop/error.hpp"
#include "tilepop/io.hpp"
#include "tilepop/pipeline.hpp"
#include "tilepop/synth.hpp"

using namespace tilepop;

namespace {

PopulationVector pop(Period p, std::vector<double> values) {
    PopulationVector v;
    v.period = p;
    for (std::size_t i = 0; i < values.size(); ++i) v.tile_ids.push_back(TileId{i + 1});
    v.values = std::move(values);
    return v;
}

SynthConfig small_synth() {
    SynthConfig c;
    c.city = "smallville";
    c.rows = 30;
    c.cols = 30;
    c.n_services = 3;
    c.center_radius = 0;
    c.ring_radius = 1;
    c.last_date = parse_iso_date("2019-04-05");
    return c;
}

TrainConfig quick_train() {
    TrainConfig t;
    t.n_rounds = 80;
    t.max_depth = 4;
    return t;
}

struct SmallRun {
    SynthConfig cfg = small_synth();
    SynthCity city = gen_city(cfg);
    FeatureMatrix features;

    SmallRun() {
        const SynthTrafficSource source(city, cfg);
        const IngestResult ing = ingest_city(cfg.manifest(), city.grid.tile_ids(), source);
        const auto services = cfg.service_names();
        features = build_feature_matrix(ing.accumulators, services, city.grid);
    }
};

const SmallRun& small_run() {
    static const SmallRun run;
    return run;
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("change table reproduces the published percentages") {
        std::vector<CityPopulation> cities;
        for (const auto& c : fixture::kPublishedCities) cities.push_back({std::string(c.city), c.night, c.day});
        const ChangeTable t = change_table(cities);
        REQUIRE(t.size() == 20);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto& want = fixture::kPublishedCities[i];
            CHECK(t[i].city == want.city);
            CHECK(std::abs(t[i].percent - want.percent) <= 0.3);
            CHECK(t[i].percent == doctest::Approx(100.0 * (want.day - want.night) / want.night));
        }
        CHECK(std::abs(t[0].percent - 15.6) <= 0.05);
        CHECK(t[0].percent_rounded == doctest::Approx(15.6));
        CHECK(t[3].percent < 0.0);  // Marseille loses residents by day
    }

    TEST_CASE("change table edge cases") {
        const ChangeTable t = change_table({{"same", 100.0, 100.0}});
        CHECK(t[0].percent == 0.0);
        CHECK_THROWS_AS(change_table({{"zero", 0.0, 10.0}}), ValidationError);
        CHECK_THROWS_AS(change_table({{"nan", std::nan(""), 10.0}}), ValidationError);
        const std::string md = change_table_markdown(change_table({{"Paris", 6974, 8064}}));
        CHECK(md.find("Paris") != std::string::npos);
        CHECK(md.find("15.6") != std::string::npos);
    }

    TEST_CASE("diff map thresholds") {
        const PopulationVector night = pop(Period::Night, {10.0, 10.0, 30.0, 10.0});
        SUBCASE("equal vectors give empty masks") {
            const DiffMap m = diff_map(night, pop(Period::Day, night.values));
            CHECK(m.increase_count() == 0);
            CHECK(m.decrease_count() == 0);
        }
        SUBCASE("changes above tau only") {
            const DiffMap m = diff_map(night, pop(Period::Day, {20.0, 15.0, 10.0, 14.9}), 5.0);
            CHECK(m.increase == std::vector<bool>{true, false, false, false});
            CHECK(m.decrease == std::vector<bool>{false, false, true, false});
            for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE((m.increase[i] && m.decrease[i]));
        }
        SUBCASE("tau above every change") {
            const DiffMap m = diff_map(night, pop(Period::Day, {20.0, 15.0, 10.0, 14.9}), 25.0);
            CHECK(m.increase_count() + m.decrease_count() == 0);
        }
        SUBCASE("errors") {
            PopulationVector day = pop(Period::Day, {1.0, 2.0, 3.0, 4.0});
            std::swap(day.tile_ids[0], day.tile_ids[1]);
            CHECK_THROWS_AS(diff_map(night, day), DataError);
            CHECK_THROWS_AS(diff_map(night, pop(Period::Day, {1.0})), DataError);
            CHECK_THROWS_AS(diff_map(night, night, 0.0), ValidationError);
            CHECK_THROWS_AS(diff_map(night, night, -1.0), ValidationError);
        }
    }

    TEST_CASE("diff map CSV") {
        const PopulationVector night = pop(Period::Night, {10.0, 30.0});
        const PopulationVector day = pop(Period::Day, {20.0, 10.0});
        const DiffMap m = diff_map(night, day, 5.0);
        CHECK(write_diffmap_csv(m, night, day) == "tile_id,night,day,delta,increase,decrease\n1,10,20,10,1,0\n2,30,10,-20,0,1\n");
    }

    TEST_CASE("mask IoU") {
        CHECK(mask_iou({false, false}, {false, false}) == 1.0);
        CHECK(mask_iou({true, true, false}, {true, false, true}) == doctest::Approx(1.0 / 3.0));
        CHECK(mask_iou({true}, {true}) == 1.0);
        CHECK_THROWS_AS(mask_iou({true}, {true, false}), ValidationError);
    }

    TEST_CASE("heat map export") {
        const CityGrid g = fixture::lattice(1, 3, 0.0, 0.0, 1.0);
        const std::vector<TileId> ids = g.tile_ids();
        const std::vector<double> vals{0.0, std::exp(1.0) - 1.0, 5.0};
        const auto j = nlohmann::json::parse(heatmap_export(ids, vals, g, true));
        REQUIRE(j.at("features").size() == 3);
        const auto& f = j.at("features");
        CHECK(f[0].at("properties").at("v_log").get<double>() == 0.0);
        CHECK(std::abs(f[1].at("properties").at("v_log").get<double>() - 1.0) <= 1e-12);
        CHECK(std::abs(f[2].at("properties").at("v").get<double>() - 5.0) <= 1e-9);
        CHECK(f[2].at("geometry").at("type") == "Polygon");
        const auto plain = nlohmann::json::parse(heatmap_export(ids, vals, g, false));
        CHECK_FALSE(plain.at("features")[0].at("properties").contains("v_log"));
        CHECK_THROWS_AS(heatmap_export(ids, {0.0, -1.0, 0.0}, g, true), ValidationError);
        CHECK_THROWS_AS(heatmap_export({TileId{99}}, {1.0}, g, true), DataError);
    }

    TEST_CASE("model kinds") {
        for (ModelKind k : {ModelKind::Night, ModelKind::Day, ModelKind::DayGivenNight}) {
            CHECK(parse_model_kind(model_kind_name(k)) == k);
        }
        CHECK_THROWS_AS(parse_model_kind("weekday"), ValidationError);
    }

    TEST_CASE("run config parsing") {
        const std::filesystem::path base = "/base";
        CHECK_THROWS_AS(run_config_from_json(nlohmann::json::object(), base), ValidationError);
        const nlohmann::json inputs = {{"geojson", "g.geojson"}, {"traffic_dir", "t"},
                                       {"night_raster", "/abs/n.asc"}, {"day_raster", "d.asc"}};
        CHECK_THROWS_AS(run_config_from_json({{"inputs", inputs}}, base), ValidationError);
        nlohmann::json full = {{"inputs", inputs},
                               {"manifest", manifest_to_json(small_synth().manifest())},
                               {"models", {"day"}},
                               {"diffmap", {{"tau", 2.5}}}};
        const RunConfig c = run_config_from_json(full, base);
        CHECK(c.geojson == base / "g.geojson");
        CHECK(c.night_raster == std::filesystem::path("/abs/n.asc"));
        CHECK(c.models == std::vector<ModelKind>{ModelKind::Day});
        CHECK(c.tau == 2.5);
        full["diffmap"]["tau"] = 0.0;
        CHECK_THROWS_AS(run_config_from_json(full, base), ValidationError);
        full["diffmap"]["tau"] = "five";
        CHECK_THROWS_AS(run_config_from_json(full, base), ValidationError);
        const RunConfig s = run_config_from_json({{"synth", synth_config_to_json(small_synth())}}, base);
        REQUIRE(s.synth);
        CHECK(s.synth->city == "smallville");
    }

    TEST_CASE("run_model on a small synthetic city") {
        const SmallRun& sr = small_run();
        const PopulationVector night = sr.city.truth.population(Period::Night);
        const PopulationVector day = sr.city.truth.population(Period::Day);
        CHECK_THROWS_AS(run_model(ModelKind::DayGivenNight, sr.features, day, nullptr, {}, quick_train()),
                        ValidationError);
        const ModelRun d = run_model(ModelKind::Day, sr.features, day, nullptr, {}, quick_train());
        const ModelRun dn = run_model(ModelKind::DayGivenNight, sr.features, day, &night, {}, quick_train());
        CHECK(d.dataset.cols() == sr.features.cols());
        CHECK(dn.dataset.cols() == sr.features.cols() + 1);
        CHECK(d.eval.rmsle_validation < d.baseline_rmsle);
        CHECK(d.shap.rows() == d.split.validation.size());
        CHECK(d.shap_local_error <= 1e-6);
        CHECK(dn.shap_local_error <= 1e-6);
        REQUIRE_FALSE(dn.gains.empty());
        // On a city this small the zone step competes with the night field; it must still rank high.
        bool night_ranked = false;
        for (std::size_t i = 0; i < 3 && i < dn.gains.size(); ++i) night_ranked |= dn.gains[i].name == "night_population";
        CHECK(night_ranked);
        CHECK(dn.eval.rmsle_validation < d.eval.rmsle_validation);
        const auto j = model_report_json(d, 5, nlohmann::json::object());
        CHECK(j.dump().find("rmsle") != std::string::npos);
    }

    TEST_CASE("dependence series follows the dominant feature") {
        const SmallRun& sr = small_run();
        const PopulationVector night = sr.city.truth.population(Period::Night);
        const PopulationVector day = sr.city.truth.population(Period::Day);
        const ModelRun dn = run_model(ModelKind::DayGivenNight, sr.features, day, &night, {}, quick_train());
        const DependenceSeries s = dependence_series(dn.shap, dn.dataset, "night_population");
        REQUIRE(s.size() > 10);
        // Spearman rank correlation between feature value and attribution.
        auto ranks = [](std::vector<double> v) {
            std::vector<std::size_t> idx(v.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
            std::vector<double> r(v.size());
            for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
            return r;
        };
        std::vector<double> xs, ps;
        for (const auto& p : s) {
            xs.push_back(p.feature_value);
            ps.push_back(p.phi);
        }
        const auto rx = ranks(xs), rp = ranks(ps);
        const double n = static_cast<double>(s.size());
        double d2 = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) d2 += (rx[i] - rp[i]) * (rx[i] - rp[i]);
        const double rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        CHECK(rho > 0.8);
    }

    TEST_CASE("run_all writes a complete report") {
        const auto dir = fixture::temp_dir("pipeline_run_all");
        RunConfig cfg;
        cfg.synth = small_synth();
        cfg.train = quick_train();
        cfg.output_dir = dir;
        const RunSummary s = run_all(cfg);
        CHECK(s.models.size() == 3);
        for (const char* f : {"report.json", "report.md", "run_manifest.json", "diffmap.csv", "population_night.csv",
                              "population_day.csv", "heatmap_night.geojson", "heatmap_day.geojson", "model_day.json",
                              "shap_day-given-night.csv"}) {
            CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
        }
        const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
        CHECK(report_markdown(report).find("smallville") != std::string::npos);
        REQUIRE(s.truth_iou_increase);
        CHECK(*s.truth_iou_increase > 0.9);
    }
}
