#include "hwm/util/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hwm/util/binio.hpp"

namespace hwm {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_double(std::optional<double> v) { return v ? fmt_double(*v) : std::string(); }

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("csv has no column '" + name + "'");
}

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw std::invalid_argument("csv row has " + std::to_string(row.size()) + " fields, header has " +
                                std::to_string(header.size()));
  }
  rows.push_back(std::move(row));
}

namespace {

void put_line(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find_first_of(",\"\n") != std::string::npos) {
      throw std::invalid_argument("csv field needs quoting: " + fields[i]);
    }
    if (i) out += ',';
    out += fields[i];
  }
  out += '\n';
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::string out;
  put_line(out, table.header);
  for (const auto& r : table.rows) put_line(out, r);
  write_text_atomic(path, out);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrc::Io, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatErrc::Malformed, path.string() + ": empty csv");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size()) {
      throw FormatError(FormatErrc::Malformed, path.string() + ": row width differs from header");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace hwm
