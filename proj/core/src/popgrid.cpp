#include "tilepop/popgrid.hpp"

#include <array>
#include <algorithm>
#include <cmath>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

std::string_view period_name(Period p) { return p == Period::Night ? "night" : "day"; }

Period parse_period(std::string_view name) {
    if (name == "night") return Period::Night;
    if (name == "day") return Period::Day;
    throw ValidationError("unknown period '" + std::string(name) + "' (expected night or day)");
}

double PopulationVector::total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

std::string write_population_csv(const PopulationVector& p) {
    std::string out = "tile_id,population\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
        out += std::to_string(p.tile_ids[i].value);
        out += ',';
        append_double(out, p.values[i]);
        out += '\n';
    }
    return out;
}

PopulationVector read_population_csv(std::string_view bytes, Period period) {
    PopulationVector p;
    p.period = period;
    for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        if (line_no == 1) {
            if (line != "tile_id,population") throw DataError("population CSV must start with 'tile_id,population'");
            return;
        }
        auto fields = split_fields(line, ',');
        std::uint64_t id = 0;
        double v = 0.0;
        if (fields.size() != 2 || !parse_uint(fields[0], id) || !parse_double(fields[1], v) || v < 0.0) {
            throw DataError("population CSV line " + std::to_string(line_no) + " is malformed");
        }
        p.tile_ids.push_back(TileId{id});
        p.values.push_back(v);
    });
    return p;
}

namespace akima {

std::vector<double> node_derivatives(std::span<const double> y, double h) {
    const std::size_t n = y.size();
    if (n < 3) throw ValidationError("Akima spline needs at least 3 nodes");
    // Slopes m[-2..n] stored at offset 2.
    std::vector<double> m(n + 3);
    for (std::size_t i = 0; i + 1 < n; ++i) m[i + 2] = (y[i + 1] - y[i]) / h;
    m[1] = 2.0 * m[2] - m[3];
    m[0] = 2.0 * m[1] - m[2];
    m[n + 1] = 2.0 * m[n] - m[n - 1];
    m[n + 2] = 2.0 * m[n + 1] - m[n];

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Node i uses m[i-2], m[i-1], m[i], m[i+1] -> m[i..i+3] in storage.
        const double w1 = std::abs(m[i + 3] - m[i + 2]);
        const double w2 = std::abs(m[i + 1] - m[i]);
        d[i] = (w1 + w2 == 0.0) ? 0.5 * (m[i + 1] + m[i + 2]) : (w1 * m[i + 1] + w2 * m[i + 2]) / (w1 + w2);
    }
    return d;
}

}  // namespace akima

AkimaSurface::AkimaSurface(const CoarseRaster& raster)
    : x0_(raster.center_x(0)),
      y0_(raster.center_y(0)),
      h_(raster.cell_size),
      nrows_(raster.nrows),
      ncols_(raster.ncols),
      values_(raster.values) {
    raster.validate();
    if (nrows_ < 5 || ncols_ < 5) throw ValidationError("Akima fit needs a raster of at least 5 x 5 cells");
    for (double v : values_) {
        if (raster.is_nodata(v)) throw ValidationError("raster holds no-data cells; fill them before fitting");
    }
    dx_.resize(values_.size());
    for (std::size_t r = 0; r < nrows_; ++r) {
        std::span<const double> row(values_.data() + r * ncols_, ncols_);
        auto d = akima::node_derivatives(row, h_);
        std::copy(d.begin(), d.end(), dx_.begin() + static_cast<std::ptrdiff_t>(r * ncols_));
    }
}

namespace {

struct AxisPosition {
    std::size_t interval;  // left node of the segment used
    double u;              // local coordinate, in [0,1] inside the hull
    bool outside;
};

AxisPosition axis_position(double coord, double origin, double h, std::size_t n) {
    const double g = (coord - origin) / h;
    // Nodes on the hull edge may land a rounding step outside it.
    constexpr double kEdge = 1e-9;
    const bool outside = !(g >= -kEdge && g <= static_cast<double>(n - 1) + kEdge);
    const double f = std::floor(g);
    std::size_t k = 0;
    if (f >= static_cast<double>(n - 2)) {
        k = n - 2;
    } else if (f > 0.0) {
        k = static_cast<std::size_t>(f);
    }
    return {k, g - static_cast<double>(k), outside};
}

}  // namespace

InterpolatedValue AkimaSurface::evaluate(LonLat p) const {
    const AxisPosition ax = axis_position(p.lon, x0_, h_, ncols_);
    const AxisPosition ay = axis_position(p.lat, y0_, h_, nrows_);
    const std::size_t j = ax.interval;
    const std::size_t k = ay.interval;
    const std::size_t rlo = k >= 2 ? k - 2 : 0;
    const std::size_t rhi = std::min(nrows_ - 1, k + 3);

    std::array<double, 6> column{};
    const std::size_t len = rhi - rlo + 1;
    for (std::size_t r = rlo; r <= rhi; ++r) {
        const std::size_t a = r * ncols_ + j;
        column[r - rlo] = akima::hermite(values_[a], values_[a + 1], dx_[a], dx_[a + 1], h_, ax.u);
    }
    const auto dy = akima::node_derivatives(std::span<const double>(column.data(), len), h_);
    const std::size_t lk = k - rlo;
    const double v = akima::hermite(column[lk], column[lk + 1], dy[lk], dy[lk + 1], h_, ay.u);
    return {v, ax.outside || ay.outside};
}

std::vector<InterpolatedValue> AkimaSurface::evaluate(std::span<const LonLat> points) const {
    std::vector<InterpolatedValue> out;
    out.reserve(points.size());
    for (const LonLat& p : points) out.push_back(evaluate(p));
    return out;
}

AkimaSurface fit_akima(const CoarseRaster& raster) { return AkimaSurface(raster); }

CoarseRaster fill_nodata(const CoarseRaster& raster, std::size_t* filled) {
    CoarseRaster out = raster;
    std::size_t n = 0;
    for (double& v : out.values) {
        if (out.is_nodata(v)) {
            v = 0.0;
            ++n;
        }
    }
    if (filled) *filled = n;
    return out;
}

DownscaleResult downscale_population(const CoarseRaster& raster, const CityGrid& grid, Period period,
                                     bool conserve_mass) {
    DownscaleResult result;
    result.report.conserve_mass = conserve_mass;
    const CoarseRaster filled = fill_nodata(raster, &result.report.nodata_filled);
    const AkimaSurface surface(filled);
    const double cell_area = filled.cell_size * filled.cell_size;

    PopulationVector& pop = result.population;
    pop.period = period;
    pop.tile_ids = grid.tile_ids();
    pop.values.resize(grid.size());
    std::vector<std::size_t> cell_of(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const LonLat c = tile_centroid(grid[i]);
        const auto cell = locate_cell(filled, c);
        if (!cell) {
            throw DataError("tile " + std::to_string(grid[i].id.value) + " is not covered by the population raster");
        }
        cell_of[i] = cell->row * filled.ncols + cell->col;
        const InterpolatedValue iv = surface.evaluate(c);
        if (iv.outside) ++result.report.tiles_outside_hull;
        double v = iv.value;
        if (v < 0.0) {
            v = 0.0;
            ++result.report.tiles_clamped;
        }
        pop.values[i] = v * (ring_area(grid[i].ring) / cell_area);
    }

    if (conserve_mass) {
        std::vector<double> sums(filled.values.size(), 0.0);
        std::vector<std::size_t> counts(filled.values.size(), 0);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            sums[cell_of[i]] += pop.values[i];
            counts[cell_of[i]] += 1;
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const std::size_t c = cell_of[i];
            const double target = filled.values[c];
            if (sums[c] > 0.0) {
                pop.values[i] *= target / sums[c];
            } else {
                pop.values[i] = target / static_cast<double>(counts[c]);
            }
        }
    }
    return result;
}

}  // namespace tilepop
