#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hwm {

/// Shortest text that parses back to the same double (%.17g), or "" when empty.
std::string fmt_double(double v);
std::string fmt_double(std::optional<double> v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws std::out_of_range if absent.
  std::size_t column(const std::string& name) const;
  void add(std::vector<std::string> row);
};

/// Written atomically. Fields never contain commas or quotes in this project,
/// so no quoting is done; a field containing one is rejected.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace hwm
