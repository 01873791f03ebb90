#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace poseforge {

std::vector<std::string_view> split(std::string_view text, char delim);

/// Strict parsers: the whole field must be consumed. `where` prefixes the error message.
int parse_int(std::string_view field, const std::string& where);
std::uint64_t parse_u64(std::string_view field, const std::string& where);
double parse_double(std::string_view field, const std::string& where);
bool parse_bool(std::string_view field, const std::string& where);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Little-endian binary primitives for the cache and checkpoint formats.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);

}  // namespace poseforge
