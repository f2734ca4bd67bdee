#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace prunescope {

// Minimal CSV support for the index and report tables. Fields never contain
// commas, quotes or newlines in any file this library writes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name, or -1.
  int column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace prunescope
