#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "metroscm/data.hpp"
#include "metroscm/network.hpp"

namespace metroscm {

enum class Outcome : std::uint8_t { entry_ridership, exit_ridership, avg_journey_time, avg_speed, crowding_density };

inline constexpr std::array<Outcome, 5> kOutcomes{Outcome::entry_ridership, Outcome::exit_ridership,
                                                  Outcome::avg_journey_time, Outcome::avg_speed,
                                                  Outcome::crowding_density};

std::string_view outcome_name(Outcome m);
std::optional<Outcome> parse_outcome(std::string_view name);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Dense (outcome, station, day, interval) cube. Missing cells hold NaN.
class OutcomePanel {
 public:
  OutcomePanel() = default;
  OutcomePanel(std::size_t stations, std::vector<Day> days, int intervals);

  double at(Outcome m, StationIndex a, std::size_t day, int t) const { return values_[offset(m, a, day) + t]; }
  double& at(Outcome m, StationIndex a, std::size_t day, int t) { return values_[offset(m, a, day) + t]; }

  /// All intervals of one (outcome, station, day).
  std::span<const double> series(Outcome m, StationIndex a, std::size_t day) const {
    return {values_.data() + offset(m, a, day), static_cast<std::size_t>(intervals_)};
  }

  std::optional<std::size_t> day_index(Day d) const;
  const std::vector<Day>& days() const { return days_; }
  std::size_t station_count() const { return stations_; }
  int interval_count() const { return intervals_; }

  /// Bitwise equality, treating NaN == NaN.
  bool identical(const OutcomePanel& other) const;

 private:
  std::size_t offset(Outcome m, StationIndex a, std::size_t day) const {
    return ((static_cast<std::size_t>(m) * stations_ + a) * days_.size() + day) * static_cast<std::size_t>(intervals_);
  }

  std::size_t stations_ = 0;
  std::vector<Day> days_;
  int intervals_ = 0;
  std::vector<double> values_;
};

/// (day, interval) a trip's exit is counted in. A tap-out past the end of
/// service falls back to the tap-in interval.
std::pair<Day, int> exit_slot(const TripRecord& trip, const ServiceGrid& grid);
std::pair<Day, int> entry_slot(const TripRecord& trip, const ServiceGrid& grid);

// Per-cell definitions. They scan the whole table and exist as the reference
// the panel builder is checked against.
double entry_ridership(const std::vector<TripRecord>& trips, const ServiceGrid& grid, StationIndex a, Day d, int t);
double exit_ridership(const std::vector<TripRecord>& trips, const ServiceGrid& grid, StationIndex a, Day d, int t);
std::optional<double> avg_journey_time(const std::vector<TripRecord>& trips, const ServiceGrid& grid,
                                       StationIndex a, Day d, int t);
/// km/h. Zero when the only tap-ins of the cell abandoned the metro (station closed).
std::optional<double> avg_speed(const std::vector<TripRecord>& trips, const std::vector<AbandonRecord>& abandonments,
                                const NetworkGraph& graph, StationIndex a, Day d, int t);
std::optional<double> crowding_density(const AssignmentResult& assignment, const ServiceGrid& grid, StationIndex a,
                                       Day d, int t);

OutcomePanel build_panel(const Dataset& dataset, const NetworkGraph& graph, const AssignmentResult& assignment,
                         const std::vector<Day>& days);
/// Runs passenger assignment and covers the dataset's analysis days.
OutcomePanel build_panel(const Dataset& dataset, const NetworkGraph& graph, const AssignmentConfig& config = {});

/// station,day,interval,entry,exit,jt_min,speed_kmh,density
void write_panel_csv(const std::filesystem::path& path, const OutcomePanel& panel, const Topology& topology);

}  // namespace metroscm
