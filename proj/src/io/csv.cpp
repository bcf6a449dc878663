#include "dancerl/io/csv.hpp"

#include <charconv>

#include "dancerl/core/errors.hpp"
#include "dancerl/io/checkpoint.hpp"

namespace dancerl {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

CsvTable& CsvTable::row() {
  if (!rows_.empty() && rows_.back().size() != columns_.size())
    throw ContractError("csv: previous row has " + std::to_string(rows_.back().size()) +
                        " cells, expected " + std::to_string(columns_.size()));
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  if (rows_.empty()) throw ContractError("csv: add() before row()");
  if (rows_.back().size() == columns_.size()) throw ContractError("csv: too many cells in row");
  if (v.find_first_of(",\"\n") != std::string::npos) {
    std::string q = "\"";
    for (char c : v) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
    rows_.back().push_back(q + "\"");
  } else {
    rows_.back().push_back(v);
  }
  return *this;
}

CsvTable& CsvTable::add(double v) { return add(format_double(v)); }
CsvTable& CsvTable::add(long long v) { return add(std::to_string(v)); }

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(columns_);
  for (const auto& r : rows_) {
    if (r.size() != columns_.size()) throw ContractError("csv: incomplete row");
    line(r);
  }
  return out;
}

void CsvTable::save(const std::filesystem::path& path) const { write_file(path, str()); }

}  // namespace dancerl
