#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bitalloc::io {

// Shortest-exact decimal for a double (round-trips bit-for-bit).
std::string format_double(double v);

// Write-to-temp-then-rename so failed commands leave no partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::string_view bytes);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

}  // namespace bitalloc::io
