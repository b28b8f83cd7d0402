#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>

namespace metroscm {

// All timestamps carry 1-second resolution, interpreted as local service time.
using Timestamp = std::chrono::sys_seconds;
using Day = std::chrono::sys_days;
using Seconds = std::chrono::seconds;

class TimeParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "YYYY-MM-DDTHH:MM:SS" (a space is accepted in place of 'T').
/// Hours up to 47 are allowed so that after-midnight times of a service day
/// can be written either way.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

Day parse_date(std::string_view text);
std::string format_date(Day day);

/// "HH:MM" or "HH:MM:SS" as an offset from midnight.
Seconds parse_clock(std::string_view text);
std::string format_clock(Seconds since_midnight);

inline Day day_of(Timestamp ts) { return std::chrono::floor<std::chrono::days>(ts); }
inline Seconds time_of_day(Timestamp ts) { return ts - Timestamp{day_of(ts)}; }

/// Monday = 0 ... Sunday = 6.
int weekday_index(Day day);
inline bool is_weekday(Day day) { return weekday_index(day) < 5; }

/// Fixed daily interval grid. Intervals are labelled 0..count()-1, interval t
/// covering [start + t*length, start + (t+1)*length).
struct ServiceGrid {
  Seconds service_start{6 * 3600};
  Seconds service_end{24 * 3600};
  Seconds interval_length{15 * 60};

  int count() const {
    return static_cast<int>((service_end - service_start) / interval_length);
  }
  Timestamp interval_begin(Day day, int t) const {
    return Timestamp{day} + service_start + t * interval_length;
  }
  Timestamp interval_end(Day day, int t) const { return interval_begin(day, t + 1); }
  bool in_service(Timestamp ts) const {
    const auto tod = time_of_day(ts);
    return tod >= service_start && tod < service_end;
  }

  void validate() const;
};

class OutsideServiceHours : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Interval index of a timestamp on its own calendar day.
/// Throws OutsideServiceHours before the service start or at/after its end.
int interval_of(Timestamp ts, const ServiceGrid& grid);

}  // namespace metroscm
