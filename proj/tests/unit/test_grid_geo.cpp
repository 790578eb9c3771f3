#include <doctest.h>

#include <cmath>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tilepop/error.hpp"
#include "tilepop/grid_geo.hpp"
#include "tilepop/random.hpp"
#include "tilepop/synth.hpp"

using namespace tilepop;

namespace {

const char* kOneSquare = R"({"type":"FeatureCollection","features":[
  {"type":"Feature","properties":{"tile_id":0},
   "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}]})";

std::string two_features(int id_a, int id_b) {
    auto f = [](int id) {
        return R"({"type":"Feature","properties":{"tile_id":)" + std::to_string(id) +
               R"(},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}})";
    };
    return R"({"type":"FeatureCollection","features":[)" + f(id_a) + "," + f(id_b) + "]}";
}

}  // namespace

TEST_SUITE("grid_geo") {
    TEST_CASE("single square feature parses to one tile") {
        const CityGrid g = parse_city_geojson(kOneSquare);
        REQUIRE(g.size() == 1);
        CHECK(g[0].id.value == 0);
        CHECK(g[0].ring.size() == 5);
    }

    TEST_CASE("duplicate id is rejected and named") {
        try {
            (void)parse_city_geojson(two_features(7, 7));
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("7") != std::string::npos);
        }
    }

    TEST_CASE("malformed inputs name the feature") {
        CHECK_THROWS_AS(parse_city_geojson("{"), DataError);
        CHECK_THROWS_AS(parse_city_geojson(R"({"type":"Feature"})"), DataError);
        const std::string no_id = R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{},
            "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}]})";
        try {
            (void)parse_city_geojson(no_id);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("feature 0") != std::string::npos);
        }
        const std::string point = R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"tile_id":1},
            "geometry":{"type":"Point","coordinates":[0,0]}}]})";
        CHECK_THROWS_AS(parse_city_geojson(point), DataError);
    }

    TEST_CASE("string ids and custom id property") {
        const std::string doc = R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"cell":"42"},
            "geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,1],[0,0]]]]}}]})";
        GeoJsonOptions opt;
        opt.id_property = "cell";
        const CityGrid g = parse_city_geojson(doc, opt);
        CHECK(g[0].id.value == 42);
    }

    TEST_CASE("serialize and parse back") {
        const CityGrid g = fixture::lattice(3, 4, 2.0, 48.0, 0.01);
        const CityGrid back = parse_city_geojson(serialize_city_geojson(g));
        REQUIRE(back.size() == g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(back[i].id == g[i].id);
            CHECK(back[i].ring == g[i].ring);
        }
    }

    TEST_CASE("centroid of unit square and translated square") {
        const Tile t = fixture::square(0, 0.0, 0.0, 1.0);
        CHECK(tile_centroid(t).lon == doctest::Approx(0.5));
        CHECK(tile_centroid(t).lat == doctest::Approx(0.5));
        const Tile u = fixture::square(1, 10.0, 20.0, 1.0);
        CHECK(tile_centroid(u).lon == doctest::Approx(10.5));
        CHECK(tile_centroid(u).lat == doctest::Approx(20.5));
    }

    TEST_CASE("degenerate ring is rejected") {
        const std::vector<LonLat> ring{{0, 0}, {1, 1}, {0, 0}, {1, 1}};
        CHECK_THROWS_AS(tile_centroid(ring), DataError);
    }

    TEST_CASE("ring area of a square") {
        const Tile t = fixture::square(0, 2.25, 48.8, 0.001);
        CHECK(ring_area(t.ring) == doctest::Approx(1e-6).epsilon(1e-9));
    }

    TEST_CASE("3x3 synthetic grid has ids 0..8 on a regular lattice") {
        SynthConfig cfg;
        cfg.rows = 3;
        cfg.cols = 3;
        cfg.coarse_factor = 3;
        cfg.commuter_flow = 0.0;
        const SynthCity city = gen_city(cfg);
        const CityGrid g = parse_city_geojson(serialize_city_geojson(city.grid));
        REQUIRE(g.size() == 9);
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(g[i].id.value == i);
            const LonLat c = tile_centroid(g[i]);
            const double ex = cfg.origin_lon + (static_cast<double>(i % 3) + 0.5) * cfg.tile_size;
            const double ey = cfg.origin_lat + (static_cast<double>(i / 3) + 0.5) * cfg.tile_size;
            CHECK(std::abs(c.lon - ex) < 1e-12);
            CHECK(std::abs(c.lat - ey) < 1e-12);
        }
        const LonLat mid = tile_centroid(g[4]);
        CHECK(std::abs(mid.lon - (cfg.origin_lon + 1.5 * cfg.tile_size)) < 1e-12);
        CHECK(std::abs(mid.lat - (cfg.origin_lat + 1.5 * cfg.tile_size)) < 1e-12);
    }

    TEST_CASE("locate_cell at the first cell centre and outside") {
        const CoarseRaster r = fixture::raster(4, 5, 10.0, 20.0, 2.0);
        const auto c = locate_cell(r, {10.0 + 1.0, 20.0 + 1.0});
        REQUIRE(c);
        CHECK(*c == CellIndex{0, 0});
        CHECK_FALSE(locate_cell(r, {9.99, 21.0}));
        CHECK_FALSE(locate_cell(r, {11.0, 28.0}));  // north edge is exclusive
        CHECK_FALSE(locate_cell(r, {20.0, 21.0}));  // east edge is exclusive
        // Interior boundaries belong to the higher cell.
        CHECK(*locate_cell(r, {12.0, 22.0}) == CellIndex{1, 1});
    }

    TEST_CASE("map_fine_to_coarse agrees with a scan over all cells") {
        const CoarseRaster r = fixture::raster(7, 9, -1.3, 2.7, 0.37);
        SplitMix64 rng(11);
        std::vector<Tile> tiles;
        for (std::uint64_t i = 0; i < 100; ++i) {
            // Some tiles fall outside the raster on purpose.
            const double x = rng.uniform(-1.6, -1.3 + 9 * 0.37 + 0.3);
            const double y = rng.uniform(2.4, 2.7 + 7 * 0.37 + 0.3);
            tiles.push_back(fixture::square(i, x, y, 0.01));
        }
        const CityGrid g("random", std::move(tiles));
        const auto mapped = map_fine_to_coarse(g, r);
        std::size_t outside = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto expect = oracle::scan_cell(r, tile_centroid(g[i]));
            CHECK(mapped[i] == expect);
            if (!expect) ++outside;
        }
        CHECK(outside > 0);
        CHECK(outside < 100);
    }

    TEST_CASE("raster validation") {
        CoarseRaster r = fixture::raster(2, 2, 0, 0, 1);
        CHECK_NOTHROW(r.validate());
        r.values.pop_back();
        CHECK_THROWS_AS(r.validate(), ValidationError);
        r = fixture::raster(2, 2, 0, 0, 0);
        CHECK_THROWS_AS(r.validate(), ValidationError);
    }
}
