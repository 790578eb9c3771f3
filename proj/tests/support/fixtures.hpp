#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tilepop/grid_geo.hpp"
#include "tilepop/random.hpp"

namespace fixture {

// Axis-aligned square tile with its lower-left corner at (x, y).
inline tilepop::Tile square(std::uint64_t id, double x, double y, double size) {
    return {tilepop::TileId{id},
            {{x, y}, {x + size, y}, {x + size, y + size}, {x, y + size}, {x, y}}};
}

// rows x cols lattice starting at (x0, y0); ids r * cols + c from the south-west corner.
inline tilepop::CityGrid lattice(std::size_t rows, std::size_t cols, double x0, double y0, double size) {
    std::vector<tilepop::Tile> tiles;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            tiles.push_back(square(r * cols + c, x0 + static_cast<double>(c) * size,
                                   y0 + static_cast<double>(r) * size, size));
        }
    }
    return tilepop::CityGrid("testcity", std::move(tiles));
}

inline tilepop::CoarseRaster raster(std::size_t nrows, std::size_t ncols, double xll, double yll, double cs) {
    tilepop::CoarseRaster r;
    r.xll = xll;
    r.yll = yll;
    r.cell_size = cs;
    r.nrows = nrows;
    r.ncols = ncols;
    r.values.assign(nrows * ncols, 0.0);
    return r;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tilepop_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixture
