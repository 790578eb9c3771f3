#pragma once

#include <string>
#include <string_view>

#include "tilepop/grid_geo.hpp"

namespace tilepop {

/// Reads an ESRI ASCII grid. Header keys are case-insensitive; both the
/// xllcorner/yllcorner and xllcenter/yllcenter conventions are accepted.
/// The file stores the northern row first; the returned raster has row 0 south.
CoarseRaster read_esri_ascii(std::string_view bytes);

/// Writes ncols/nrows/xllcorner/yllcorner/cellsize/NODATA_value followed by
/// rows north to south, values in shortest round-trip form.
std::string write_esri_ascii(const CoarseRaster& raster);

}  // namespace tilepop
