#include "tilepop/grid_geo.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

using nlohmann::json;

CityGrid::CityGrid(std::string city, std::vector<Tile> tiles) : city_(std::move(city)), tiles_(std::move(tiles)) {
    index_.reserve(tiles_.size());
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tiles_[i].id.value, i);
        if (!inserted) {
            throw DataError("duplicate tile id " + std::to_string(tiles_[i].id.value) + " at feature " +
                            std::to_string(i));
        }
    }
}

std::optional<std::size_t> CityGrid::index_of(TileId id) const {
    auto it = index_.find(id.value);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<TileId> CityGrid::tile_ids() const {
    std::vector<TileId> ids;
    ids.reserve(tiles_.size());
    for (const auto& t : tiles_) ids.push_back(t.id);
    return ids;
}

namespace {

[[noreturn]] void feature_error(std::size_t index, const std::string& what) {
    throw DataError("feature " + std::to_string(index) + ": " + what);
}

TileId parse_tile_id(const json& props, const std::string& key, std::size_t index) {
    if (!props.is_object() || !props.contains(key)) feature_error(index, "missing property '" + key + "'");
    const json& v = props.at(key);
    if (v.is_number_unsigned()) return TileId{v.get<std::uint64_t>()};
    if (v.is_number_integer()) {
        const auto i = v.get<std::int64_t>();
        if (i >= 0) return TileId{static_cast<std::uint64_t>(i)};
    }
    if (v.is_string()) {
        std::uint64_t id = 0;
        if (parse_uint(v.get_ref<const std::string&>(), id)) return TileId{id};
    }
    feature_error(index, "property '" + key + "' is not a non-negative integer id");
}

std::vector<LonLat> parse_ring(const json& geometry, std::size_t index) {
    if (!geometry.is_object() || !geometry.contains("type") || !geometry.contains("coordinates")) {
        feature_error(index, "malformed geometry");
    }
    const std::string type = geometry.at("type").is_string() ? geometry.at("type").get<std::string>() : "";
    const json* rings = &geometry.at("coordinates");
    if (type == "MultiPolygon") {
        if (!rings->is_array() || rings->size() != 1) feature_error(index, "MultiPolygon must have exactly one part");
        rings = &(*rings)[0];
    } else if (type != "Polygon") {
        feature_error(index, "unsupported geometry type '" + type + "'");
    }
    if (!rings->is_array() || rings->empty() || !(*rings)[0].is_array()) feature_error(index, "malformed polygon rings");
    const json& exterior = (*rings)[0];
    std::vector<LonLat> ring;
    ring.reserve(exterior.size());
    for (const json& pos : exterior) {
        if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
            feature_error(index, "malformed coordinate position");
        }
        const LonLat p{pos[0].get<double>(), pos[1].get<double>()};
        if (!std::isfinite(p.lon) || !std::isfinite(p.lat)) feature_error(index, "non-finite coordinate");
        ring.push_back(p);
    }
    if (ring.size() < 4) feature_error(index, "polygon ring needs at least 4 positions");
    return ring;
}

}  // namespace

CityGrid parse_city_geojson(std::string_view bytes, const GeoJsonOptions& options) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("GeoJSON parse error: ") + e.what());
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc.at("features").is_array()) {
        throw DataError("GeoJSON input is not a FeatureCollection");
    }
    std::string city = options.city;
    if (city.empty() && doc.contains("name") && doc.at("name").is_string()) city = doc.at("name").get<std::string>();

    const json& features = doc.at("features");
    std::vector<Tile> tiles;
    tiles.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const json& f = features[i];
        if (!f.is_object() || !f.contains("geometry")) feature_error(i, "missing geometry");
        Tile tile;
        tile.id = parse_tile_id(f.contains("properties") ? f.at("properties") : json{}, options.id_property, i);
        tile.ring = parse_ring(f.at("geometry"), i);
        tiles.push_back(std::move(tile));
    }
    return CityGrid(std::move(city), std::move(tiles));
}

std::string serialize_city_geojson(const CityGrid& grid, std::string_view id_property) {
    json features = json::array();
    for (const Tile& t : grid.tiles()) {
        json ring = json::array();
        for (const LonLat& p : t.ring) ring.push_back({p.lon, p.lat});
        features.push_back({{"type", "Feature"},
                            {"properties", {{std::string(id_property), t.id.value}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}}});
    }
    json doc = {{"type", "FeatureCollection"}, {"name", grid.city()}, {"features", std::move(features)}};
    return doc.dump();
}

LonLat tile_centroid(std::span<const LonLat> ring) {
    std::vector<LonLat> distinct;
    distinct.reserve(ring.size());
    for (const LonLat& p : ring) {
        if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
    }
    if (distinct.size() < 3) throw DataError("degenerate polygon: fewer than 3 distinct vertices");
    double sx = 0.0, sy = 0.0;
    for (const LonLat& p : distinct) {
        sx += p.lon;
        sy += p.lat;
    }
    const double n = static_cast<double>(distinct.size());
    return {sx / n, sy / n};
}

LonLat tile_centroid(const Tile& tile) { return tile_centroid(std::span<const LonLat>(tile.ring)); }

double ring_area(std::span<const LonLat> ring) {
    if (ring.size() < 3) return 0.0;
    // Shift to the first vertex to limit cancellation for small tiles at large coordinates.
    const LonLat o = ring.front();
    double twice = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const LonLat& a = ring[i];
        const LonLat& b = ring[(i + 1) % ring.size()];
        twice += (a.lon - o.lon) * (b.lat - o.lat) - (b.lon - o.lon) * (a.lat - o.lat);
    }
    return std::abs(twice) * 0.5;
}

void CoarseRaster::validate() const {
    if (nrows == 0 || ncols == 0) throw ValidationError("raster must have positive nrows and ncols");
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ValidationError("raster cell size must be positive");
    if (!std::isfinite(xll) || !std::isfinite(yll)) throw ValidationError("raster origin must be finite");
    if (values.size() != nrows * ncols) throw ValidationError("raster value count does not match nrows*ncols");
    for (double v : values) {
        if (!is_nodata(v) && !std::isfinite(v)) throw ValidationError("raster contains non-finite values");
    }
}

namespace {

// Index k with edge(k) <= v < edge(k+1), where edge(k) = origin + k*cs, or nullopt.
std::optional<std::size_t> locate_axis(double v, double origin, double cs, std::size_t n) {
    const auto edge = [&](std::size_t k) { return origin + static_cast<double>(k) * cs; };
    if (!(v >= edge(0)) || !(v < edge(n))) return std::nullopt;
    const double guess = std::floor((v - origin) / cs);
    std::size_t k = guess <= 0.0 ? 0 : std::min(static_cast<std::size_t>(guess), n - 1);
    // The floor guess can be off by one where (v - origin)/cs rounds across an integer.
    while (k > 0 && v < edge(k)) --k;
    while (k + 1 < n && v >= edge(k + 1)) ++k;
    return k;
}

}  // namespace

std::optional<CellIndex> locate_cell(const CoarseRaster& raster, LonLat point) {
    auto col = locate_axis(point.lon, raster.xll, raster.cell_size, raster.ncols);
    if (!col) return std::nullopt;
    auto row = locate_axis(point.lat, raster.yll, raster.cell_size, raster.nrows);
    if (!row) return std::nullopt;
    return CellIndex{*row, *col};
}

std::vector<std::optional<CellIndex>> map_fine_to_coarse(const CityGrid& grid, const CoarseRaster& raster) {
    std::vector<std::optional<CellIndex>> out;
    out.reserve(grid.size());
    for (const Tile& t : grid.tiles()) out.push_back(locate_cell(raster, tile_centroid(t)));
    return out;
}

}  // namespace tilepop
