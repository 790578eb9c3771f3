#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include <zlib.h>

#include "fixtures.hpp"
#include "tilepop/calendar.hpp"
#include "tilepop/error.hpp"
#include "tilepop/io.hpp"
#include "tilepop/random.hpp"
#include "tilepop/raster_io.hpp"

using namespace tilepop;

TEST_SUITE("io") {
    TEST_CASE("format_double round-trips") {
        SplitMix64 rng(3);
        for (int i = 0; i < 1000; ++i) {
            const double v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng() % 80) - 40);
            double back = 0.0;
            REQUIRE(parse_double(format_double(v), back));
            CHECK(back == v);
        }
        CHECK(format_double(0.0) == "0");
        CHECK(format_double(1.5) == "1.5");
    }

    TEST_CASE("parse_double rejects garbage") {
        double v = 0.0;
        CHECK_FALSE(parse_double("1.5x", v));
        CHECK_FALSE(parse_double("", v));
        CHECK_FALSE(parse_double("nan", v));
        CHECK(parse_double("-2e3", v));
        CHECK(v == -2000.0);
        std::uint64_t u = 0;
        CHECK(parse_uint("123", u));
        CHECK(u == 123);
        CHECK_FALSE(parse_uint("-1", u));
    }

    TEST_CASE("split_fields keeps empty fields") {
        auto f = split_fields("a,,b,", ',');
        REQUIRE(f.size() == 4);
        CHECK(f[1].empty());
        CHECK(f[3].empty());
    }

    TEST_CASE("for_each_line strips CR and numbers lines") {
        std::vector<std::pair<std::string, std::size_t>> lines;
        for_each_line("a\r\nb\nc", [&](std::string_view l, std::size_t n) { lines.emplace_back(std::string(l), n); });
        REQUIRE(lines.size() == 3);
        CHECK(lines[0].first == "a");
        CHECK(lines[2].second == 3);
    }

    TEST_CASE("fnv1a64 known vectors") {
        CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
        CHECK(hex_digest(0xabcULL) == "0000000000000abc");
    }

    TEST_CASE("write_file and read_file, including gzip") {
        const auto dir = fixture::temp_dir("io");
        write_file(dir / "sub" / "x.txt", "hello\n");
        CHECK(read_file(dir / "sub" / "x.txt") == "hello\n");
        CHECK_THROWS_AS(read_file(dir / "missing.txt"), DataError);

        const std::string payload = "1 2 3\n4 5 6\n";
        gzFile gz = gzopen((dir / "y.txt.gz").string().c_str(), "wb");
        REQUIRE(gz != nullptr);
        gzwrite(gz, payload.data(), static_cast<unsigned>(payload.size()));
        gzclose(gz);
        CHECK(read_file(dir / "y.txt.gz") == payload);
    }
}

TEST_SUITE("calendar") {
    TEST_CASE("day types") {
        CHECK(day_type_of(parse_iso_date("2019-03-15")) == DayType::Friday);
        CHECK(day_type_of(parse_iso_date("2019-03-16")) == DayType::Saturday);
        CHECK(day_type_of(parse_iso_date("2019-03-17")) == DayType::Sunday);
        CHECK(day_type_of(parse_iso_date("2019-03-18")) == DayType::Weekday);
        CHECK(day_type_of(parse_iso_date("2019-03-21")) == DayType::Weekday);
        CHECK(parse_day_type(day_type_name(DayType::Sunday)) == DayType::Sunday);
        CHECK_THROWS_AS(parse_day_type("Holiday"), ValidationError);
    }

    TEST_CASE("date formats") {
        const Date d = parse_compact_date("20190331");
        CHECK(format_iso_date(d) == "2019-03-31");
        CHECK(format_compact_date(d) == "20190331");
        CHECK_THROWS_AS(parse_iso_date("2019-02-30"), ValidationError);
        CHECK_THROWS_AS(parse_compact_date("2019033"), ValidationError);
    }

    TEST_CASE("study window spans 77 days") {
        CHECK(date_range(parse_iso_date("2019-03-16"), parse_iso_date("2019-05-31")).size() == 77);
        CHECK(date_range(parse_iso_date("2019-03-16"), parse_iso_date("2019-03-15")).empty());
    }
}

TEST_SUITE("raster_io") {
    TEST_CASE("write and read back, north row first on disk") {
        CoarseRaster r = fixture::raster(2, 3, 2.25, 48.8, 0.01);
        for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = static_cast<double>(i) + 0.25;
        r.values[4] = r.nodata;
        const std::string text = write_esri_ascii(r);
        // First data line is the northern row (row 1).
        CHECK(text.find("3.25 -9999 5.25") != std::string::npos);
        const CoarseRaster back = read_esri_ascii(text);
        CHECK(back.nrows == 2);
        CHECK(back.ncols == 3);
        CHECK(back.xll == r.xll);
        CHECK(back.yll == r.yll);
        CHECK(back.cell_size == r.cell_size);
        CHECK(back.values == r.values);
    }

    TEST_CASE("centre convention and case-insensitive keys") {
        const std::string text =
            "NCOLS 2\nNROWS 1\nXLLCENTER 0.5\nYLLCENTER 1.5\nCELLSIZE 1\n1 2\n";
        const CoarseRaster r = read_esri_ascii(text);
        CHECK(r.xll == 0.0);
        CHECK(r.yll == 1.0);
        CHECK(r.values == std::vector<double>{1, 2});
    }

    TEST_CASE("malformed grids") {
        CHECK_THROWS_AS(read_esri_ascii("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n"), DataError);
        CHECK_THROWS_AS(read_esri_ascii("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n"),
                        DataError);
        CHECK_THROWS_AS(read_esri_ascii("ncols 2\nnrows 1\nxllcorner 0\ncellsize 1\n1 2\n"), DataError);
        CHECK_THROWS_AS(read_esri_ascii("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 x\n"),
                        DataError);
    }
}
