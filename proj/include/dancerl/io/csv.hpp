#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dancerl {

// Fixed-column CSV table. Doubles are written in shortest round-trip form,
// so equal values always produce equal bytes.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  CsvTable& row();
  CsvTable& add(const std::string& v);
  CsvTable& add(double v);
  CsvTable& add(long long v);
  CsvTable& add(int v) { return add(static_cast<long long>(v)); }
  CsvTable& add(std::size_t v) { return add(static_cast<long long>(v)); }

  std::string str() const;
  void save(const std::filesystem::path& path) const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_double(double v);

}  // namespace dancerl
