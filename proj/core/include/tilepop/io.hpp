#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tilepop {

/// Reads a whole file; `*.gz` files are transparently decompressed.
/// Throws DataError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Writes bytes, creating parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Appends format_double(value) to out without an intermediate allocation.
void append_double(std::string& out, double value);

/// Parses a complete token as a finite double. Returns false on any trailing garbage.
bool parse_double(std::string_view token, double& out) noexcept;

bool parse_uint(std::string_view token, std::uint64_t& out) noexcept;

/// 64-bit FNV-1a digest, used to fingerprint run inputs.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex_digest(std::uint64_t digest);

/// Splits on a single delimiter character, keeping empty fields.
std::vector<std::string_view> split_fields(std::string_view line, char delim);

/// Calls fn(line, line_number) for every line (1-based), stripping a trailing '\r'.
template <class Fn>
void for_each_line(std::string_view bytes, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        std::size_t end = bytes.find('\n', pos);
        if (end == std::string_view::npos) end = bytes.size();
        std::string_view line = bytes.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(line, ++line_no);
        pos = end + 1;
    }
}

}  // namespace tilepop
