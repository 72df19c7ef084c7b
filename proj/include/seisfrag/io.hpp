#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace seisfrag::io {

// Shortest representation that parses back to the identical double.
// NaN is written as "nan".
std::string format_double(double x);
double parse_double(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

// Whole-file helpers; throw seisfrag::Error on I/O failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// FNV-1a 64-bit digest, hex encoded. Used for config and artifact hashes.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a_hex(std::string_view data);

}  // namespace seisfrag::io
