#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tilepop/grid_geo.hpp"

namespace tilepop {

enum class Period { Night, Day };
std::string_view period_name(Period p);
Period parse_period(std::string_view name);

/// Persons per tile for one period, in grid order.
struct PopulationVector {
    Period period = Period::Night;
    std::vector<TileId> tile_ids;
    std::vector<double> values;

    std::size_t size() const noexcept { return tile_ids.size(); }
    double total() const;
};

/// CSV "tile_id,population".
std::string write_population_csv(const PopulationVector& p);
PopulationVector read_population_csv(std::string_view bytes, Period period);

namespace akima {

/// Node derivatives of the 1-D Akima spline through equally spaced values
/// (spacing h). End slopes are extended with Akima's rule m[-1] = 2m[0] - m[1],
/// m[-2] = 2m[-1] - m[0] (and symmetrically on the right). Needs >= 3 values.
std::vector<double> node_derivatives(std::span<const double> values, double h);

/// Cubic Hermite segment on [0, h] evaluated at u*h; u outside [0, 1] extrapolates.
inline double hermite(double y0, double y1, double d0, double d1, double h, double u) noexcept {
    const double m = (y1 - y0) / h;
    const double c2 = (3.0 * m - 2.0 * d0 - d1) * h;
    const double c3 = (d0 + d1 - 2.0 * m) * h;
    return y0 + u * (d0 * h + u * (c2 + u * c3));
}

}  // namespace akima

struct InterpolatedValue {
    double value = 0.0;
    bool outside = false;  // the point lies outside the hull of cell centres (extrapolated)
};

/// Separable bivariate Akima surface through the cell-centre values of a coarse raster.
/// Evaluation interpolates along x within the six rows around the point, then runs a
/// 1-D Akima spline along y through those values.
class AkimaSurface {
public:
    /// Throws ValidationError when the raster has fewer than 5 rows or columns, or holds
    /// no-data cells (fill them first).
    explicit AkimaSurface(const CoarseRaster& raster);

    InterpolatedValue evaluate(LonLat point) const;
    std::vector<InterpolatedValue> evaluate(std::span<const LonLat> points) const;

    std::size_t nrows() const noexcept { return nrows_; }
    std::size_t ncols() const noexcept { return ncols_; }

private:
    double x0_, y0_, h_;
    std::size_t nrows_, ncols_;
    std::vector<double> values_;  // row-major, row 0 south
    std::vector<double> dx_;      // Akima derivative along x at each node
};

/// Fits the interpolant; no-data cells must already be filled.
AkimaSurface fit_akima(const CoarseRaster& raster);

inline std::vector<InterpolatedValue> interpolate_at(const AkimaSurface& surface, std::span<const LonLat> points) {
    return surface.evaluate(points);
}

/// Returns a copy with no-data cells set to 0; `filled` receives the count.
CoarseRaster fill_nodata(const CoarseRaster& raster, std::size_t* filled = nullptr);

struct DownscaleReport {
    std::size_t nodata_filled = 0;
    std::size_t tiles_outside_hull = 0;
    std::size_t tiles_clamped = 0;
    bool conserve_mass = false;
};

struct DownscaleResult {
    PopulationVector population;
    DownscaleReport report;
};

/// Tile value = max(0, surface(centroid)) * tile_area / cell_area. With conserve_mass the
/// tiles of each coarse cell are rescaled to sum to the cell's count (uniform split when
/// their interpolated sum is zero). Throws DataError when a tile centroid lies outside
/// the raster.
DownscaleResult downscale_population(const CoarseRaster& raster, const CityGrid& grid, Period period,
                                     bool conserve_mass);

}  // namespace tilepop
