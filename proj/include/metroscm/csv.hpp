#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metroscm::csv {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field only when it needs it.
std::string escape(std::string_view field);

/// Streaming reader that checks the header row against an exact column list.
class Reader {
 public:
  Reader(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

  /// Next data row, skipping blank lines. Row numbers are 1-based file lines.
  std::optional<std::vector<std::string>> next();
  std::size_t line_number() const { return line_number_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_number_ = 0;
};

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// Fixed-precision rendering; NaN renders as an empty field.
std::string format_double(double value, int decimals = 6);

}  // namespace metroscm::csv
