#include "metroscm/time.hpp"

#include <charconv>

#include <fmt/format.h>

namespace metroscm {

namespace {

int parse_fixed(std::string_view text, std::size_t pos, std::size_t width) {
  if (pos + width > text.size()) throw TimeParseError(fmt::format("truncated time value '{}'", text));
  int value = 0;
  auto first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + width, value);
  if (ec != std::errc{} || ptr != first + width)
    throw TimeParseError(fmt::format("malformed time value '{}'", text));
  return value;
}

void expect_char(std::string_view text, std::size_t pos, std::string_view allowed) {
  if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos)
    throw TimeParseError(fmt::format("malformed time value '{}'", text));
}

}  // namespace

Day parse_date(std::string_view text) {
  if (text.size() != 10) throw TimeParseError(fmt::format("malformed date '{}'", text));
  expect_char(text, 4, "-");
  expect_char(text, 7, "-");
  using namespace std::chrono;
  const year_month_day ymd{year{parse_fixed(text, 0, 4)},
                           month{static_cast<unsigned>(parse_fixed(text, 5, 2))},
                           day{static_cast<unsigned>(parse_fixed(text, 8, 2))}};
  if (!ymd.ok()) throw TimeParseError(fmt::format("invalid calendar date '{}'", text));
  return sys_days{ymd};
}

std::string format_date(Day d) {
  using namespace std::chrono;
  const year_month_day ymd{d};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

Seconds parse_clock(std::string_view text) {
  if (text.size() != 5 && text.size() != 8)
    throw TimeParseError(fmt::format("malformed clock time '{}'", text));
  expect_char(text, 2, ":");
  const int h = parse_fixed(text, 0, 2);
  const int m = parse_fixed(text, 3, 2);
  int s = 0;
  if (text.size() == 8) {
    expect_char(text, 5, ":");
    s = parse_fixed(text, 6, 2);
  }
  if (h > 47 || m > 59 || s > 59) throw TimeParseError(fmt::format("clock time out of range '{}'", text));
  return Seconds{h * 3600 + m * 60 + s};
}

std::string format_clock(Seconds since_midnight) {
  const auto total = since_midnight.count();
  return fmt::format("{:02d}:{:02d}:{:02d}", total / 3600, (total / 60) % 60, total % 60);
}

Timestamp parse_timestamp(std::string_view text) {
  if (text.size() != 19) throw TimeParseError(fmt::format("malformed timestamp '{}'", text));
  expect_char(text, 10, "T ");
  return Timestamp{parse_date(text.substr(0, 10))} + parse_clock(text.substr(11));
}

std::string format_timestamp(Timestamp ts) {
  return format_date(day_of(ts)) + "T" + format_clock(time_of_day(ts));
}

int weekday_index(Day day) {
  const std::chrono::weekday wd{day};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

void ServiceGrid::validate() const {
  if (interval_length <= Seconds{0}) throw std::invalid_argument("interval length must be positive");
  if (service_end <= service_start) throw std::invalid_argument("service end must follow service start");
  if ((service_end - service_start) % interval_length != Seconds{0})
    throw std::invalid_argument("service span must be a whole number of intervals");
}

int interval_of(Timestamp ts, const ServiceGrid& grid) {
  const auto tod = time_of_day(ts);
  if (tod < grid.service_start || tod >= grid.service_end)
    throw OutsideServiceHours(fmt::format("{} is outside service hours", format_timestamp(ts)));
  return static_cast<int>((tod - grid.service_start) / grid.interval_length);
}

}  // namespace metroscm
