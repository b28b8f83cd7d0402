#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metroscm/data.hpp"
#include "metroscm/detect.hpp"
#include "metroscm/network.hpp"
#include "metroscm/outcomes.hpp"

namespace metroscm {

struct TimetableSpec {
  Seconds first_departure{6 * 3600};
  Seconds last_departure{23 * 3600 + 30 * 60};
  double speed_kmh = 36.0;
  Seconds dwell{30};
  Seconds min_separation{90};  // between consecutive departures from one platform
  double rain_slowdown = 0.04;    // running-time increase per mm/h of rain
  double wind_slowdown = 0.003;   // per km/h of wind
};

struct DemandSpec {
  double base_per_interval = 100.0;     // trips produced per station and interval at unit factors
  std::vector<double> station_weight;  // attraction and production per station; empty = all 1
  double distance_decay_hops = 1.5;
  std::vector<double> hourly_profile;  // one factor per service hour, interpolated between hour midpoints
  std::array<double, 5> weekday_factor{0.94, 1.0, 1.02, 1.0, 1.12};
  double temperature_ref_c = 21.0;
  double temperature_coef = -0.02;  // per degree above the reference
  double wind_coef = -0.004;        // per km/h
  double rain_coef = -0.06;         // per mm/h
  double concert_coef = 0.15;
  double sports_coef = 0.12;
  double exhibition_coef = 0.08;
  double day_noise_sd = 0.02;
  double station_noise_sd = 0.01;
};

struct WeatherSpec {
  double temperature_mean_c = 21.0;
  double temperature_sd_c = 3.0;
  double temperature_min_c = 15.0;
  double temperature_max_c = 27.0;
  double diurnal_amplitude_c = 2.0;
  double wind_mean_kmh = 15.0;
  double wind_sd_kmh = 8.0;
  double wind_min_kmh = 4.0;
  double wind_max_kmh = 44.0;
  double rain_day_probability = 0.3;
  double rain_max_mmh = 4.0;  // day intensity drawn in [0.5, max], hours vary by +-10%
};

struct EventSpec {
  double concert_probability = 0.15;
  double sports_probability = 0.15;
  double exhibition_probability = 0.1;
};

struct PassengerSpec {
  Seconds egress_min{30};
  Seconds egress_max{120};
  double patience_min_minutes = 12.0;
  double patience_mean_extra_minutes = 8.0;
  double abandon_prone_share = 0.35;
  double deterrence_share = 0.6;  // arrivals at a closed station that never tap in
};

struct InjectionSpec {
  std::string station;
  Day day{};
  Seconds start{};
  Seconds duration{};
  std::string cause = "signal failure";

  Timestamp start_time() const { return Timestamp{day} + start; }
  Timestamp end_time() const { return start_time() + duration; }
};

struct SimSpec {
  std::uint64_t seed = 20190311;
  Topology topology;
  Day first_day{};
  int days = 14;  // weekdays, starting at first_day
  std::vector<Day> holidays;
  TimetableSpec timetable;
  DemandSpec demand;
  WeatherSpec weather;
  EventSpec events;
  PassengerSpec passengers;
  std::optional<InjectionSpec> disruption;

  /// The simulated weekdays in order.
  std::vector<Day> calendar_days() const;
  void validate() const;
};

/// Two lines, ten stations, one interchange, 14 weekdays, a 27-minute evening
/// halt at the terminus of line 1 on the eleventh day.
SimSpec default_spec();

SimSpec parse_sim_spec(std::string_view json_text);
SimSpec read_sim_spec(const std::filesystem::path& path);
std::string sim_spec_to_json(const SimSpec& spec);

struct ManifestRow {
  std::string train_id;
  std::string service_id;
  LineIndex line = 0;
  Direction direction = Direction::up;
  std::size_t stop = 0;
  StationIndex station = 0;
  std::optional<Timestamp> arrival;
  std::optional<Timestamp> departure;
  int boardings = 0;
  int alightings = 0;
  int on_board = 0;  // on the segment departing this stop
  int seats = 0;
  double floor_area_m2 = 0.0;
};

struct DaySimulation {
  Day day{};
  bool disrupted = false;
  std::vector<TripRecord> trips;
  std::vector<AbandonRecord> abandonments;
  std::vector<AvlRecord> avl;
  std::vector<ManifestRow> manifest;
  std::vector<WeatherRecord> weather;
  std::vector<EventRecord> events;
  std::size_t generated = 0;  // gate arrivals drawn from the demand model
  std::size_t deterred = 0;
};

/// One day of operation. Passenger draws depend only on (seed, day), so a
/// disrupted run and its undisrupted twin see the same arrivals.
DaySimulation simulate_day(const SimSpec& spec, Day day, bool with_disruption);

struct GroundTruth {
  bool injected = false;
  DisruptionRecord record;  // the injected halt
  Day day{};
  int treatment_start = 0;
  OutcomePanel disrupted;    // one day
  OutcomePanel undisrupted;  // same day, same seed, no halt

  /// Disrupted minus undisrupted value; NaN where either is missing.
  double effect(Outcome outcome, StationIndex station, int interval) const;
};

GroundTruth ground_truth(const SimSpec& spec);

struct SimulationResult {
  Dataset dataset;  // every day as observed, the disrupted day with its halt
  std::vector<ManifestRow> manifests;
  GroundTruth truth;
};

SimulationResult simulate(const SimSpec& spec, unsigned workers = 1);

/// Dataset files plus ground_truth.csv, injection_log.csv and manifests.csv.
void write_simulation(const std::filesystem::path& dir, const SimulationResult& result);

}  // namespace metroscm
