#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskadapt::harness {

/// Malformed CSV. `row()` is 1-based and counts the header as row 1.
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t row, const std::string& message);
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws CsvError on row 1 when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  /// Numeric cell; accepts nan / inf spellings. `row` indexes `rows`.
  double number(std::size_t row, std::size_t col) const;
};

/// Comma separated, no quoting, every row as wide as the header.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// %.17g, with "nan" for NaN.
std::string format_double(double value);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t width_;
};

}  // namespace riskadapt::harness
