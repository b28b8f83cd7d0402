#include "metroscm/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

namespace metroscm::csv {

std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (quoted) throw CsvError("unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Reader::Reader(const std::filesystem::path& path, const std::vector<std::string>& expected_header)
    : path_(path), in_(path) {
  if (!in_) throw CsvError(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in_, line)) throw CsvError(fmt::format("'{}' is empty (header row required)", path.string()));
  ++line_number_;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  if (header != expected_header) {
    throw CsvError(fmt::format("'{}': header mismatch, expected '{}' got '{}'", path.string(),
                               fmt::join(expected_header, ","), fmt::join(header, ",")));
  }
}

std::optional<std::vector<std::string>> Reader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (line.empty() || line == "\r") continue;
    return split_line(line);
  }
  return std::nullopt;
}

Writer::Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw CsvError(fmt::format("cannot write '{}'", path.string()));
  row(header);
}

void Writer::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << escape(fields[i]);
  }
  out_ << '\n';
}

void Writer::close() {
  out_.close();
  if (!out_) throw CsvError(fmt::format("failed writing '{}'", path_.string()));
}

double parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw CsvError(fmt::format("'{}' is not a number", text));
  return value;
}

long long parse_int(std::string_view text) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw CsvError(fmt::format("'{}' is not an integer", text));
  return value;
}

std::string format_double(double value, int decimals) {
  if (std::isnan(value)) return {};
  if (value == 0.0) value = 0.0;  // no "-0.000"
  auto text = fmt::format("{:.{}f}", value, decimals);
  if (text.find_first_not_of("-0.") == std::string::npos && text.front() == '-') text.erase(0, 1);
  return text;
}

}  // namespace metroscm::csv
