#include "prunescope/csv.hpp"

#include <fstream>

#include "prunescope/errors.hpp"

namespace prunescope {

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("missing file: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path.string() + ": empty CSV");
  table.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size()) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(table.header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace prunescope
