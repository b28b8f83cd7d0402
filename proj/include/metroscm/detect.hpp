#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metroscm/data.hpp"

namespace metroscm {

enum class DisruptionSource : std::uint8_t { incident_log, avl_detected, merged };

std::string_view to_string(DisruptionSource s);

struct DisruptionRecord {
  StationIndex station = 0;
  LineIndex line = 0;
  Day day{};
  Timestamp start{};
  Timestamp end{};
  std::optional<int> start_interval;  // empty when no interval holds five minutes of it
  DisruptionSource source = DisruptionSource::avl_detected;
  IncidentType type = IncidentType::primary;
  std::string cause;

  double duration_min() const { return static_cast<double>((end - start).count()) / 60.0; }
  friend bool operator==(const DisruptionRecord&, const DisruptionRecord&) = default;
};

struct DetectConfig {
  double headway_multiplier = 3.0;
  Seconds min_duration{300};
};

/// Service gaps in the AVL stream. At each station and direction a gap between
/// consecutive trains is a candidate when it exceeds the multiplier times the
/// scheduled headway and lasts at least min_duration. Overlapping candidates on
/// one line collapse into a single record at the station with the longest gap.
std::vector<DisruptionRecord> detect_from_avl(const std::vector<AvlRecord>& avl, const Topology& topology,
                                              const DetectConfig& config = {});

std::vector<DisruptionRecord> incident_records(const std::vector<IncidentLogRecord>& incidents,
                                               const ServiceGrid& grid);

/// Union of overlapping records per (station, line), short records dropped,
/// result in chronological order.
std::vector<DisruptionRecord> merge_logs(const std::vector<DisruptionRecord>& avl_detected,
                                         const std::vector<DisruptionRecord>& incidents,
                                         const ServiceGrid& grid, const DetectConfig& config = {});

/// First interval that overlaps [start, end] by at least `min_overlap`.
/// Throws InputError if there is none.
int treatment_start_interval(Timestamp start, Timestamp end, const ServiceGrid& grid,
                             Seconds min_overlap = Seconds{300});
/// Last interval that overlaps [start, end] by at least `min_overlap`.
int treatment_end_interval(Timestamp start, Timestamp end, const ServiceGrid& grid,
                           Seconds min_overlap = Seconds{300});

class TreatmentAssignment {
 public:
  TreatmentAssignment(StationIndex station, Day day, int start_interval, int end_interval, std::size_t stations,
                      int intervals);

  bool treated(StationIndex a, Day d, int t) const { return a == station_ && d == day_ && t >= start_; }
  StationIndex station() const { return station_; }
  Day day() const { return day_; }
  int start_interval() const { return start_; }
  /// Last interval the disruption itself covers.
  int end_interval() const { return end_; }
  std::size_t station_count() const { return stations_; }
  int interval_count() const { return intervals_; }
  std::size_t treated_cells() const { return static_cast<std::size_t>(intervals_ - start_); }

 private:
  StationIndex station_;
  Day day_;
  int start_;
  int end_;
  std::size_t stations_;
  int intervals_;
};

TreatmentAssignment assign_treatment(const DisruptionRecord& record, const Topology& topology);

struct DonorPool {
  std::vector<Day> days;  // chronological

  std::size_t size() const { return days.size(); }
};

/// Days touched by any record (start day and end day).
std::vector<Day> disrupted_days(const std::vector<DisruptionRecord>& log);

/// Non-holiday complete weekdays with no record anywhere, excluding the target day.
/// Throws EstimationError when fewer than two days qualify.
DonorPool build_donor_pool(const std::vector<DisruptionRecord>& log, const std::vector<CalendarDay>& calendar,
                           const DisruptionRecord& target);

/// Other records on the target's day. Their effects cannot be separated from the target's.
std::vector<DisruptionRecord> concurrent_records(const std::vector<DisruptionRecord>& log,
                                                 const DisruptionRecord& target);

/// station,line,day,start,end,duration_min,T_IS,source
void write_disruptions_csv(const std::filesystem::path& path, const std::vector<DisruptionRecord>& log,
                           const Topology& topology);

/// Reads a file written by write_disruptions_csv. T_IS is recomputed from the times.
std::vector<DisruptionRecord> read_disruptions_csv(const std::filesystem::path& path, const Topology& topology);

/// Full log for a dataset: AVL detection merged with the incident file.
std::vector<DisruptionRecord> detect_disruptions(const Dataset& dataset, const DetectConfig& config = {});

/// Record by 1-based position in the log.
const DisruptionRecord& disruption_by_id(const std::vector<DisruptionRecord>& log, std::size_t id);

}  // namespace metroscm
