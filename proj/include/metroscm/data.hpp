#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metroscm/time.hpp"

namespace metroscm {

using StationIndex = std::uint32_t;
using LineIndex = std::uint32_t;

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs are well formed but the estimation cannot proceed (e.g. too few donor days).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Direction : std::uint8_t { up, down };
enum class AvlEvent : std::uint8_t { arrival, departure };
enum class IncidentType : std::uint8_t { primary, secondary };
enum class EventKind : std::uint8_t { concert, sports, exhibition };

std::string_view to_string(Direction d);
std::string_view to_string(AvlEvent e);
std::string_view to_string(IncidentType t);
std::string_view to_string(EventKind k);
std::optional<Direction> parse_direction(std::string_view s);
std::optional<AvlEvent> parse_avl_event(std::string_view s);
std::optional<IncidentType> parse_incident_type(std::string_view s);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct TripRecord {
  std::string card_id;
  StationIndex origin = 0;
  StationIndex dest = 0;
  Timestamp tap_in{};
  Timestamp tap_out{};

  Seconds journey_time() const { return tap_out - tap_in; }
  friend bool operator==(const TripRecord&, const TripRecord&) = default;
};

/// A tap-in that never formed a completed journey: the passenger gave up and
/// left the metro. Only labelled data (the simulator) carries these.
struct AbandonRecord {
  std::string card_id;
  StationIndex origin = 0;
  StationIndex dest = 0;
  Timestamp tap_in{};
  Timestamp abandon_time{};
  friend bool operator==(const AbandonRecord&, const AbandonRecord&) = default;
};

struct AvlRecord {
  std::string train_id;
  std::string service_id;
  StationIndex station = 0;
  LineIndex line = 0;
  Direction direction = Direction::up;
  AvlEvent event = AvlEvent::arrival;
  Timestamp time{};
  friend bool operator==(const AvlRecord&, const AvlRecord&) = default;
};

struct IncidentLogRecord {
  Timestamp start{};
  Timestamp end{};
  StationIndex station = 0;
  LineIndex line = 0;
  std::string cause;
  IncidentType type = IncidentType::primary;
  friend bool operator==(const IncidentLogRecord&, const IncidentLogRecord&) = default;
};

struct WeatherSample {
  double temperature_c = 0.0;
  double wind_kmh = 0.0;
  double rain_mmh = 0.0;
  friend bool operator==(const WeatherSample&, const WeatherSample&) = default;
};

struct WeatherRecord {
  Timestamp hour{};
  WeatherSample sample;
  friend bool operator==(const WeatherRecord&, const WeatherRecord&) = default;
};

struct EventRecord {
  Day date{};
  EventKind kind = EventKind::concert;
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct Station {
  std::string id;
  std::string name;
  double latitude = std::numeric_limits<double>::quiet_NaN();  // NaN when unknown
  double longitude = std::numeric_limits<double>::quiet_NaN();
  std::vector<LineIndex> lines;  // derived from line definitions

  bool interchange() const { return lines.size() >= 2; }
  friend bool operator==(const Station&, const Station&) = default;
};

struct HeadwayPeriod {
  Seconds start{};
  Seconds end{};
  double headway_s = 0.0;
  friend bool operator==(const HeadwayPeriod&, const HeadwayPeriod&) = default;
};

struct Line {
  std::string id;
  std::vector<StationIndex> stations;  // "up" runs from front to back
  int seats_per_train = 0;
  double floor_area_m2 = 0.0;
  std::optional<double> scheduled_headway_s;
  std::vector<HeadwayPeriod> headway_periods;

  /// Scheduled headway at a time of day, if a baseline exists.
  std::optional<double> headway_at(Seconds time_of_day) const;
  /// Position of a station along the line, if served.
  std::optional<std::size_t> position(StationIndex s) const;
  friend bool operator==(const Line&, const Line&) = default;
};

struct Edge {
  StationIndex from = 0;
  StationIndex to = 0;
  LineIndex line = 0;
  double km = 0.0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Topology {
  std::vector<Station> stations;
  std::vector<Line> lines;
  std::vector<Edge> edges;
  ServiceGrid grid;

  std::optional<StationIndex> find_station(std::string_view id) const;
  std::optional<LineIndex> find_line(std::string_view id) const;
  std::size_t station_count() const { return stations.size(); }

  /// Checks every structural invariant and fills Station::lines.
  void finalize();
};

Topology read_topology_json(const std::filesystem::path& path);
Topology parse_topology_json(std::string_view text);
std::string topology_to_json(const Topology& topology);

struct CalendarDay {
  Day date{};
  bool holiday = false;
  bool complete = true;

  int weekday() const { return weekday_index(date); }
  bool analysis_day() const { return !holiday && complete; }
  friend bool operator==(const CalendarDay&, const CalendarDay&) = default;
};

/// Hourly city-level weather. Every 15-minute interval takes the value of the
/// hour that contains it, identically at every station.
class WeatherTable {
 public:
  WeatherTable() = default;
  explicit WeatherTable(std::vector<WeatherRecord> hourly);

  std::optional<WeatherSample> at(Timestamp ts) const;
  std::optional<WeatherSample> at(Day day, int interval, const ServiceGrid& grid) const;
  const std::vector<WeatherRecord>& hourly() const { return hourly_; }
  bool empty() const { return hourly_.empty(); }
  friend bool operator==(const WeatherTable&, const WeatherTable&) = default;

 private:
  std::vector<WeatherRecord> hourly_;
};

struct WeatherIntervalRow {
  StationIndex station = 0;
  Day day{};
  int interval = 0;
  WeatherSample sample;
};

/// Per-station 15-minute rows for every in-service interval of every hour present.
std::vector<WeatherIntervalRow> expand_weather(const WeatherTable& weather, const Topology& topology);

struct ValidationIssue {
  std::string table;
  std::size_t row = 0;
  std::string reason;
};

struct TableCount {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct ValidationReport {
  std::map<std::string, TableCount> tables;
  std::vector<ValidationIssue> issues;

  void accept(const std::string& table) { ++tables[table].accepted; }
  void reject(const std::string& table, std::size_t row, std::string reason);
  std::size_t rejected(const std::string& table) const;
  std::size_t accepted(const std::string& table) const;
  std::string summary() const;
};

struct Dataset {
  Topology topology;
  std::vector<TripRecord> trips;
  std::vector<AbandonRecord> abandonments;
  std::vector<AvlRecord> avl;
  std::vector<IncidentLogRecord> incidents;
  WeatherTable weather;
  std::vector<EventRecord> events;
  std::vector<CalendarDay> calendar;
  ValidationReport report;

  const CalendarDay* calendar_day(Day d) const;
  /// Non-holiday, complete days in chronological order.
  std::vector<Day> analysis_days() const;
};

struct LoadOptions {
  double min_temperature_c = -20.0;
  double max_temperature_c = 50.0;
};

/// Manifest: "key = value" lines, '#' comments, paths relative to the manifest.
/// Keys: topology, trips, avl (required); incidents, weather, events,
/// calendar, abandonments (optional).
std::map<std::string, std::filesystem::path> read_manifest(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options = {});

/// Puts every table in canonical order and checks cross-table invariants on
/// an in-memory dataset (used for simulator output that never touches disk).
void canonicalize(Dataset& dataset);

// Writers producing exactly the formats load_dataset reads.
void write_trips_csv(const std::filesystem::path& path, const Dataset& ds);
void write_abandonments_csv(const std::filesystem::path& path, const Dataset& ds);
void write_avl_csv(const std::filesystem::path& path, const Dataset& ds);
void write_incidents_csv(const std::filesystem::path& path, const Dataset& ds);
void write_weather_csv(const std::filesystem::path& path, const Dataset& ds);
void write_events_csv(const std::filesystem::path& path, const Dataset& ds);
void write_calendar_csv(const std::filesystem::path& path, const Dataset& ds);
void write_topology_json(const std::filesystem::path& path, const Topology& topology);

/// Writes all tables plus manifest.txt into a directory.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

}  // namespace metroscm
