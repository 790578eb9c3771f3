#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tilepop/error.hpp"
#include "tilepop/popgrid.hpp"
#include "tilepop/random.hpp"

using namespace tilepop;

namespace {

CoarseRaster random_raster(std::size_t nr, std::size_t nc, std::uint64_t seed) {
    CoarseRaster r = fixture::raster(nr, nc, 2.0, 48.0, 0.01);
    SplitMix64 rng(seed);
    for (double& v : r.values) v = rng.uniform(0.0, 5000.0);
    return r;
}

}  // namespace

TEST_SUITE("popgrid") {
    TEST_CASE("node derivatives of a line are its slope") {
        const std::vector<double> y{1.0, 3.0, 5.0, 7.0, 9.0};
        for (double d : akima::node_derivatives(y, 0.5)) CHECK(d == doctest::Approx(4.0));
        CHECK_THROWS_AS(akima::node_derivatives(std::vector<double>{1.0, 2.0}, 1.0), ValidationError);
    }

    TEST_CASE("1-D derivatives match the textbook formula") {
        SplitMix64 rng(2);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> y(3 + rng() % 10);
            for (double& v : y) v = rng.uniform(-10, 10);
            if (trial % 4 == 0) y.assign(y.size(), 2.0);  // all weights vanish
            const auto got = akima::node_derivatives(y, 0.3);
            const auto want = oracle::akima_slopes(y, 0.3);
            for (std::size_t i = 0; i < y.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }

    TEST_CASE("constant raster is reproduced everywhere") {
        CoarseRaster r = fixture::raster(6, 7, 2.0, 48.0, 0.01);
        r.values.assign(r.values.size(), 123.5);
        const AkimaSurface s = fit_akima(r);
        SplitMix64 rng(3);
        for (int i = 0; i < 500; ++i) {
            const LonLat p{rng.uniform(1.98, 2.09), rng.uniform(47.98, 48.08)};
            CHECK(std::abs(s.evaluate(p).value - 123.5) <= 1e-12 * 123.5);
        }
    }

    TEST_CASE("evaluation at nodes returns node values") {
        const CoarseRaster r = random_raster(8, 9, 4);
        const AkimaSurface s = fit_akima(r);
        for (std::size_t row = 0; row < r.nrows; ++row) {
            for (std::size_t col = 0; col < r.ncols; ++col) {
                const InterpolatedValue v = s.evaluate({r.center_x(col), r.center_y(row)});
                CHECK(std::abs(v.value - r.at(row, col)) <= 1e-9 * std::abs(r.at(row, col)));
                CHECK_FALSE(v.outside);
            }
        }
    }

    TEST_CASE("linear ramp is reproduced, midpoints are means") {
        CoarseRaster r = fixture::raster(8, 8, 0.0, 0.0, 1.0);
        auto plane = [](double x, double y) { return 2.0 * x + 3.0 * y; };
        for (std::size_t row = 0; row < 8; ++row) {
            for (std::size_t col = 0; col < 8; ++col) r.at(row, col) = plane(r.center_x(col), r.center_y(row));
        }
        const AkimaSurface s = fit_akima(r);
        SplitMix64 rng(5);
        for (int i = 0; i < 1000; ++i) {
            const double x = rng.uniform(0.5, 7.5);
            const double y = rng.uniform(0.5, 7.5);
            CHECK(std::abs(s.evaluate({x, y}).value - plane(x, y)) <= 1e-9);
        }
        const double mid = s.evaluate({2.0, r.center_y(3)}).value;  // between columns 1 and 2
        CHECK(std::abs(mid - 0.5 * (r.at(3, 1) + r.at(3, 2))) <= 1e-9);
    }

    TEST_CASE("points outside the hull are flagged") {
        const CoarseRaster r = random_raster(5, 5, 6);
        const AkimaSurface s = fit_akima(r);
        CHECK(s.evaluate({r.center_x(0) - 0.001, r.center_y(2)}).outside);
        CHECK(s.evaluate({r.center_x(2), r.center_y(4) + 0.001}).outside);
        CHECK_FALSE(s.evaluate({r.center_x(2), r.center_y(2)}).outside);
        const std::vector<LonLat> pts{{r.center_x(0) - 0.001, r.center_y(2)}, {r.center_x(1), r.center_y(1)}};
        const auto vs = interpolate_at(s, pts);
        CHECK(vs[0].outside);
        CHECK_FALSE(vs[1].outside);
    }

    TEST_CASE("surface equals the full-array oracle") {
        const CoarseRaster r = random_raster(9, 11, 7);
        const AkimaSurface s = fit_akima(r);
        SplitMix64 rng(8);
        for (int i = 0; i < 400; ++i) {
            const double x = rng.uniform(r.xll - 0.005, r.xll + 11 * 0.01 + 0.005);
            const double y = rng.uniform(r.yll - 0.005, r.yll + 9 * 0.01 + 0.005);
            const double want = oracle::akima_surface(r, x, y);
            CHECK(std::abs(s.evaluate({x, y}).value - want) <= 1e-9 * std::max(1.0, std::abs(want)));
        }
    }

    TEST_CASE("locality: one node perturbed, far values unchanged") {
        CoarseRaster a = random_raster(14, 14, 9);
        CoarseRaster b = a;
        const std::size_t nr = 7, nc = 6;
        b.at(nr, nc) += 1000.0;
        const AkimaSurface sa = fit_akima(a), sb = fit_akima(b);
        std::size_t far = 0, near_changed = 0;
        for (int i = 0; i < 60; ++i) {
            for (int j = 0; j < 60; ++j) {
                const double gx = 13.0 * i / 59.0;
                const double gy = 13.0 * j / 59.0;
                const LonLat p{a.center_x(0) + gx * a.cell_size, a.center_y(0) + gy * a.cell_size};
                const double va = sa.evaluate(p).value, vb = sb.evaluate(p).value;
                if (std::abs(gx - static_cast<double>(nc)) > 3.0 || std::abs(gy - static_cast<double>(nr)) > 3.0) {
                    CHECK(va == vb);
                    ++far;
                } else if (va != vb) {
                    ++near_changed;
                }
            }
        }
        CHECK(far > 1000);
        CHECK(near_changed > 0);
    }

    TEST_CASE("fit preconditions") {
        CHECK_THROWS_AS(fit_akima(fixture::raster(4, 8, 0, 0, 1)), ValidationError);
        CoarseRaster r = fixture::raster(5, 5, 0, 0, 1);
        r.values[3] = r.nodata;
        CHECK_THROWS_AS(fit_akima(r), ValidationError);
        std::size_t filled = 0;
        const CoarseRaster f = fill_nodata(r, &filled);
        CHECK(filled == 1);
        CHECK(f.values[3] == 0.0);
    }

    TEST_CASE("constant 100 persons per cell gives 1 per tile") {
        CoarseRaster r = fixture::raster(5, 5, 2.0, 48.0, 0.01);
        r.values.assign(25, 100.0);
        const CityGrid g = fixture::lattice(50, 50, 2.0, 48.0, 0.001);
        for (bool conserve : {false, true}) {
            const DownscaleResult d = downscale_population(r, g, Period::Night, conserve);
            for (double v : d.population.values) CHECK(std::abs(v - 1.0) <= 1e-9);
            CHECK(d.population.total() == doctest::Approx(2500.0).epsilon(1e-9));
        }
    }

    TEST_CASE("conserve_mass makes cell sums equal cell counts") {
        CoarseRaster r = random_raster(6, 6, 10);
        r.values[7] = 0.0;
        const CityGrid g = fixture::lattice(60, 60, 2.0, 48.0, 0.001);
        const DownscaleResult d = downscale_population(r, g, Period::Day, true);
        CHECK(d.report.conserve_mass);
        std::map<std::size_t, double> sums;
        const auto cells = map_fine_to_coarse(g, r);
        for (std::size_t i = 0; i < g.size(); ++i) sums[cells[i]->row * r.ncols + cells[i]->col] += d.population.values[i];
        for (std::size_t c = 0; c < r.values.size(); ++c) {
            CHECK(std::abs(sums[c] - r.values[c]) <= 1e-6 * std::max(1.0, r.values[c]));
        }
        CHECK(std::abs(d.population.total() - std::accumulate(r.values.begin(), r.values.end(), 0.0)) <=
              1e-6 * d.population.total());
        for (double v : d.population.values) CHECK(v >= 0.0);
    }

    TEST_CASE("bilinear trend without conservation matches an independent fit") {
        CoarseRaster r = fixture::raster(7, 8, 2.0, 48.0, 0.01);
        for (std::size_t row = 0; row < r.nrows; ++row) {
            for (std::size_t col = 0; col < r.ncols; ++col) {
                const double x = static_cast<double>(col), y = static_cast<double>(row);
                r.at(row, col) = 500.0 + 40.0 * x + 25.0 * y + 6.0 * x * y;
            }
        }
        const CityGrid g = fixture::lattice(70, 80, 2.0, 48.0, 0.001);
        const DownscaleResult d = downscale_population(r, g, Period::Night, false);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const LonLat c = tile_centroid(g[i]);
            const double want = std::max(0.0, oracle::akima_surface(r, c.lon, c.lat)) *
                                ring_area(g[i].ring) / (r.cell_size * r.cell_size);
            CHECK(std::abs(d.population.values[i] - want) <= 1e-9 * std::max(1.0, want));
        }
        CHECK(d.report.tiles_outside_hull > 0);  // the outer half cells lie beyond the centres
    }

    TEST_CASE("values are never negative, tiles off the raster fail") {
        // A steep edge drives the extrapolated surface below zero outside the hull.
        CoarseRaster r = fixture::raster(5, 5, 0.0, 0.0, 1.0);
        for (std::size_t row = 0; row < 5; ++row) {
            for (std::size_t c = 0; c < 5; ++c) r.at(row, c) = c < 2 ? 0.0 : 100.0 * static_cast<double>(c * c);
        }
        const CityGrid g = fixture::lattice(50, 50, 0.0, 0.0, 0.1);
        const DownscaleResult d = downscale_population(r, g, Period::Night, false);
        CHECK(d.report.tiles_clamped > 0);
        for (double v : d.population.values) CHECK(v >= 0.0);
        const CityGrid off("off", {fixture::square(1, 10.0, 10.0, 0.1)});
        CHECK_THROWS_AS(downscale_population(r, off, Period::Night, true), DataError);
    }

    TEST_CASE("population CSV round-trip") {
        PopulationVector p;
        p.period = Period::Day;
        p.tile_ids = {TileId{3}, TileId{1}};
        p.values = {1.25, 0.1};
        const PopulationVector back = read_population_csv(write_population_csv(p), Period::Day);
        CHECK(back.tile_ids == p.tile_ids);
        CHECK(back.values == p.values);
        CHECK_THROWS_AS(read_population_csv("tile_id,population\n1,x\n", Period::Day), DataError);
        CHECK(parse_period(period_name(Period::Night)) == Period::Night);
    }
}
