#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tilepop {

/// Identifier of one 100 m tile, unique within a city and stable across its files.
struct TileId {
    std::uint64_t value = 0;
    friend auto operator<=>(const TileId&, const TileId&) = default;
};

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;
    friend bool operator==(const LonLat&, const LonLat&) = default;
};

/// A tile and the exterior ring of its bounding polygon, as stored in the source file
/// (GeoJSON rings repeat the first vertex at the end).
struct Tile {
    TileId id;
    std::vector<LonLat> ring;
};

class CityGrid {
public:
    CityGrid() = default;
    /// Throws DataError on a duplicate tile id.
    CityGrid(std::string city, std::vector<Tile> tiles);

    const std::string& city() const noexcept { return city_; }
    std::span<const Tile> tiles() const noexcept { return tiles_; }
    std::size_t size() const noexcept { return tiles_.size(); }
    const Tile& operator[](std::size_t i) const { return tiles_[i]; }

    std::optional<std::size_t> index_of(TileId id) const;
    std::vector<TileId> tile_ids() const;

private:
    std::string city_;
    std::vector<Tile> tiles_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

struct GeoJsonOptions {
    std::string id_property = "tile_id";
    std::string city;
};

/// Parses a GeoJSON FeatureCollection of Polygon (or single-part MultiPolygon) tiles.
/// Errors name the offending feature index.
CityGrid parse_city_geojson(std::string_view bytes, const GeoJsonOptions& options = {});

std::string serialize_city_geojson(const CityGrid& grid, std::string_view id_property = "tile_id");

/// Arithmetic mean of the distinct vertices of a ring. Throws DataError when fewer than
/// three distinct vertices remain.
LonLat tile_centroid(std::span<const LonLat> ring);
LonLat tile_centroid(const Tile& tile);

/// Absolute shoelace area of a ring in squared degrees.
double ring_area(std::span<const LonLat> ring);

/// Axis-aligned coarse raster. Row 0 is the southernmost row; cell (r, c) covers the
/// half-open box [xll + c*cs, xll + (c+1)*cs) x [yll + r*cs, yll + (r+1)*cs).
struct CoarseRaster {
    double xll = 0.0;
    double yll = 0.0;
    double cell_size = 1.0;
    std::size_t nrows = 0;
    std::size_t ncols = 0;
    double nodata = -9999.0;
    std::vector<double> values;  // row-major, nrows * ncols

    double at(std::size_t row, std::size_t col) const { return values[row * ncols + col]; }
    double& at(std::size_t row, std::size_t col) { return values[row * ncols + col]; }
    bool is_nodata(double v) const noexcept { return v == nodata; }

    double edge_x(std::size_t col) const noexcept { return xll + static_cast<double>(col) * cell_size; }
    double edge_y(std::size_t row) const noexcept { return yll + static_cast<double>(row) * cell_size; }
    double center_x(std::size_t col) const noexcept { return xll + (static_cast<double>(col) + 0.5) * cell_size; }
    double center_y(std::size_t row) const noexcept { return yll + (static_cast<double>(row) + 0.5) * cell_size; }

    /// Throws ValidationError when dimensions, cell size or values are inconsistent.
    void validate() const;
};

struct CellIndex {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Coarse cell containing a point, or nullopt when the point lies outside the raster.
std::optional<CellIndex> locate_cell(const CoarseRaster& raster, LonLat point);

/// Per-tile coarse cell of the tile centroid (nullopt marks tiles outside the raster).
std::vector<std::optional<CellIndex>> map_fine_to_coarse(const CityGrid& grid, const CoarseRaster& raster);

}  // namespace tilepop

template <>
struct std::hash<tilepop::TileId> {
    std::size_t operator()(const tilepop::TileId& id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
