#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "metroscm/csv.hpp"
#include "metroscm/time.hpp"
#include "support.hpp"

using namespace metroscm;
using testing_support::at;

TEST(Time, ParsesAndFormatsTimestamps) {
  const auto ts = at("2019-03-11T17:41:00");
  EXPECT_EQ(format_timestamp(ts), "2019-03-11T17:41:00");
  EXPECT_EQ(parse_timestamp("2019-03-11 17:41:00"), ts);
  EXPECT_EQ(format_date(day_of(ts)), "2019-03-11");
  EXPECT_EQ(time_of_day(ts), parse_clock("17:41"));
  EXPECT_EQ(parse_timestamp("2019-03-11T24:30:00"), at("2019-03-12T00:30:00"));
  EXPECT_THROW(parse_timestamp("2019-03-11T17:61:00"), TimeParseError);
  EXPECT_THROW(parse_timestamp("yesterday"), TimeParseError);
  EXPECT_THROW(parse_date("2019-02-30"), TimeParseError);
}

TEST(Time, WeekdayIndex) {
  EXPECT_EQ(weekday_index(parse_date("2019-03-11")), 0);  // Monday
  EXPECT_EQ(weekday_index(parse_date("2019-03-15")), 4);
  EXPECT_FALSE(is_weekday(parse_date("2019-03-16")));
}

TEST(Time, IntervalExamples) {
  const ServiceGrid grid;
  EXPECT_EQ(grid.count(), 72);
  EXPECT_EQ(interval_of(at("2019-03-11T06:00:00"), grid), 0);
  EXPECT_EQ(interval_of(at("2019-03-11T17:41:00"), grid), 46);
  EXPECT_EQ(interval_of(at("2019-03-11T23:59:59"), grid), 71);
  EXPECT_THROW(interval_of(at("2019-03-11T05:59:59"), grid), OutsideServiceHours);
  EXPECT_THROW(interval_of(at("2019-03-12T00:00:00"), grid), OutsideServiceHours);
}

TEST(Time, IntervalIsMonotoneAndCoversEveryLabel) {
  const ServiceGrid grid;
  const Day day = parse_date("2019-03-11");
  int previous = -1;
  std::vector<int> hits(72, 0);
  for (auto ts = Timestamp{day} + grid.service_start; ts < Timestamp{day} + grid.service_end; ts += Seconds{7}) {
    const int t = interval_of(ts, grid);
    ASSERT_GE(t, previous);
    ASSERT_LE(t - previous, 1);
    previous = t;
    ++hits[static_cast<std::size_t>(t)];
    ASSERT_GE(ts, grid.interval_begin(day, t));
    ASSERT_LT(ts, grid.interval_end(day, t));
  }
  for (int h : hits) EXPECT_GT(h, 0);
}

TEST(Csv, SplitsQuotedFields) {
  EXPECT_EQ(csv::split_line("a,b,,c"), (std::vector<std::string>{"a", "b", "", "c"}));
  EXPECT_EQ(csv::split_line("\"x,y\",\"say \"\"hi\"\"\"\r"), (std::vector<std::string>{"x,y", "say \"hi\""}));
  EXPECT_THROW(csv::split_line("\"open"), csv::CsvError);
}

TEST(Csv, EscapeRoundTrip) {
  std::mt19937 rng(7);
  const std::string alphabet = "ab,\" 1";
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> fields(1 + rng() % 4);
    for (auto& f : fields)
      for (unsigned n = rng() % 6; n > 0; --n) f.push_back(alphabet[rng() % alphabet.size()]);
    std::string line;
    for (std::size_t j = 0; j < fields.size(); ++j) line += (j ? "," : "") + csv::escape(fields[j]);
    ASSERT_EQ(csv::split_line(line), fields) << line;
  }
}

TEST(Csv, Numbers) {
  EXPECT_DOUBLE_EQ(csv::parse_double("2.5"), 2.5);
  EXPECT_THROW(csv::parse_double("2.5x"), csv::CsvError);
  EXPECT_THROW(csv::parse_double(""), csv::CsvError);
  EXPECT_EQ(csv::parse_int("-12"), -12);
  EXPECT_THROW(csv::parse_int("1.0"), csv::CsvError);
  EXPECT_EQ(csv::format_double(-0.0000001, 3), "0.000");
  EXPECT_EQ(csv::format_double(std::numeric_limits<double>::quiet_NaN(), 3), "");
}
