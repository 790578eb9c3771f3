#include "tilepop/raster_io.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

class Tokenizer {
public:
    explicit Tokenizer(std::string_view bytes) : bytes_(bytes) {}

    std::string_view next() {
        while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        return bytes_.substr(start, pos_ - start);
    }

    std::size_t position() const noexcept { return pos_; }
    void rewind(std::size_t pos) noexcept { pos_ = pos; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

double header_number(std::string_view key, std::string_view token) {
    double v = 0.0;
    if (!parse_double(token, v)) throw DataError("ESRI header '" + std::string(key) + "' has invalid value");
    return v;
}

}  // namespace

CoarseRaster read_esri_ascii(std::string_view bytes) {
    Tokenizer tok(bytes);
    std::map<std::string, double> header;
    for (;;) {
        const std::size_t mark = tok.position();
        std::string_view key = tok.next();
        if (key.empty()) break;
        if (!std::isalpha(static_cast<unsigned char>(key.front()))) {
            tok.rewind(mark);
            break;
        }
        header[lower(key)] = header_number(key, tok.next());
    }
    for (const char* required : {"ncols", "nrows", "cellsize"}) {
        if (!header.contains(required)) throw DataError(std::string("ESRI header missing '") + required + "'");
    }
    CoarseRaster r;
    const double ncols = header["ncols"];
    const double nrows = header["nrows"];
    if (ncols < 1 || nrows < 1 || ncols != static_cast<double>(static_cast<std::size_t>(ncols)) ||
        nrows != static_cast<double>(static_cast<std::size_t>(nrows))) {
        throw DataError("ESRI ncols/nrows must be positive integers");
    }
    r.ncols = static_cast<std::size_t>(ncols);
    r.nrows = static_cast<std::size_t>(nrows);
    r.cell_size = header["cellsize"];
    if (header.contains("xllcorner") && header.contains("yllcorner")) {
        r.xll = header["xllcorner"];
        r.yll = header["yllcorner"];
    } else if (header.contains("xllcenter") && header.contains("yllcenter")) {
        r.xll = header["xllcenter"] - 0.5 * r.cell_size;
        r.yll = header["yllcenter"] - 0.5 * r.cell_size;
    } else {
        throw DataError("ESRI header needs xllcorner/yllcorner or xllcenter/yllcenter");
    }
    if (header.contains("nodata_value")) r.nodata = header["nodata_value"];

    r.values.assign(r.nrows * r.ncols, 0.0);
    for (std::size_t file_row = 0; file_row < r.nrows; ++file_row) {
        const std::size_t row = r.nrows - 1 - file_row;
        for (std::size_t col = 0; col < r.ncols; ++col) {
            std::string_view t = tok.next();
            if (t.empty()) throw DataError("ESRI grid truncated at file row " + std::to_string(file_row));
            double v = 0.0;
            if (!parse_double(t, v)) {
                throw DataError("ESRI grid value '" + std::string(t) + "' at file row " + std::to_string(file_row) +
                                " is not a number");
            }
            r.at(row, col) = v;
        }
    }
    if (!tok.next().empty()) throw DataError("ESRI grid has more values than nrows*ncols");
    try {
        r.validate();
    } catch (const ValidationError& e) {
        throw DataError(e.what());
    }
    return r;
}

std::string write_esri_ascii(const CoarseRaster& raster) {
    raster.validate();
    std::string out;
    out += "ncols " + std::to_string(raster.ncols) + "\n";
    out += "nrows " + std::to_string(raster.nrows) + "\n";
    out += "xllcorner " + format_double(raster.xll) + "\n";
    out += "yllcorner " + format_double(raster.yll) + "\n";
    out += "cellsize " + format_double(raster.cell_size) + "\n";
    out += "NODATA_value " + format_double(raster.nodata) + "\n";
    for (std::size_t file_row = 0; file_row < raster.nrows; ++file_row) {
        const std::size_t row = raster.nrows - 1 - file_row;
        for (std::size_t col = 0; col < raster.ncols; ++col) {
            if (col > 0) out += ' ';
            append_double(out, raster.at(row, col));
        }
        out += '\n';
    }
    return out;
}

}  // namespace tilepop
