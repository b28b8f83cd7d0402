#include "metroscm/outcomes.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <tuple>

#include "metroscm/csv.hpp"

namespace metroscm {

std::string_view outcome_name(Outcome m) {
  switch (m) {
    case Outcome::entry_ridership: return "entry_ridership";
    case Outcome::exit_ridership: return "exit_ridership";
    case Outcome::avg_journey_time: return "avg_journey_time";
    case Outcome::avg_speed: return "avg_speed";
    case Outcome::crowding_density: return "crowding_density";
  }
  return "entry_ridership";
}

std::optional<Outcome> parse_outcome(std::string_view name) {
  for (auto m : kOutcomes)
    if (outcome_name(m) == name) return m;
  return std::nullopt;
}

OutcomePanel::OutcomePanel(std::size_t stations, std::vector<Day> days, int intervals)
    : stations_(stations), days_(std::move(days)), intervals_(intervals) {
  values_.assign(kOutcomes.size() * stations_ * days_.size() * static_cast<std::size_t>(intervals_), kMissing);
}

std::optional<std::size_t> OutcomePanel::day_index(Day d) const {
  auto it = std::find(days_.begin(), days_.end(), d);
  if (it == days_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - days_.begin());
}

bool OutcomePanel::identical(const OutcomePanel& other) const {
  if (stations_ != other.stations_ || days_ != other.days_ || intervals_ != other.intervals_) return false;
  return std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0;
}

std::pair<Day, int> entry_slot(const TripRecord& trip, const ServiceGrid& grid) {
  return {day_of(trip.tap_in), interval_of(trip.tap_in, grid)};
}

std::pair<Day, int> exit_slot(const TripRecord& trip, const ServiceGrid& grid) {
  if (day_of(trip.tap_out) == day_of(trip.tap_in) && grid.in_service(trip.tap_out))
    return {day_of(trip.tap_out), interval_of(trip.tap_out, grid)};
  return entry_slot(trip, grid);
}

namespace {

double trip_speed_kmh(const TripRecord& trip, const NetworkGraph& graph) {
  const double hours = static_cast<double>(trip.journey_time().count()) / 3600.0;
  return graph.shortest_distance(trip.origin, trip.dest) / hours;
}

bool in_slot(Timestamp ts, const ServiceGrid& grid, Day d, int t) {
  return grid.in_service(ts) && day_of(ts) == d && interval_of(ts, grid) == t;
}

}  // namespace

double entry_ridership(const std::vector<TripRecord>& trips, const ServiceGrid& grid, StationIndex a, Day d, int t) {
  return static_cast<double>(std::count_if(trips.begin(), trips.end(), [&](const TripRecord& trip) {
    return trip.origin == a && entry_slot(trip, grid) == std::pair{d, t};
  }));
}

double exit_ridership(const std::vector<TripRecord>& trips, const ServiceGrid& grid, StationIndex a, Day d, int t) {
  return static_cast<double>(std::count_if(trips.begin(), trips.end(), [&](const TripRecord& trip) {
    return trip.dest == a && exit_slot(trip, grid) == std::pair{d, t};
  }));
}

std::optional<double> avg_journey_time(const std::vector<TripRecord>& trips, const ServiceGrid& grid,
                                       StationIndex a, Day d, int t) {
  long long seconds = 0;
  long long n = 0;
  for (const auto& trip : trips) {
    if (trip.origin != a || entry_slot(trip, grid) != std::pair{d, t}) continue;
    seconds += trip.journey_time().count();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(seconds) / static_cast<double>(n) / 60.0;
}

std::optional<double> avg_speed(const std::vector<TripRecord>& trips, const std::vector<AbandonRecord>& abandonments,
                                const NetworkGraph& graph, StationIndex a, Day d, int t) {
  const auto& grid = graph.topology().grid;
  double sum = 0.0;
  long long n = 0;
  for (const auto& trip : trips) {
    if (trip.origin != a || entry_slot(trip, grid) != std::pair{d, t}) continue;
    sum += trip_speed_kmh(trip, graph);
    ++n;
  }
  if (n > 0) return sum / static_cast<double>(n);
  const bool closed = std::any_of(abandonments.begin(), abandonments.end(), [&](const AbandonRecord& ab) {
    return ab.origin == a && in_slot(ab.tap_in, grid, d, t);
  });
  if (closed) return 0.0;
  return std::nullopt;
}

std::optional<double> crowding_density(const AssignmentResult& assignment, const ServiceGrid& grid, StationIndex a,
                                       Day d, int t) {
  double sum = 0.0;
  long long n = 0;
  for (std::size_t r = 0; r < assignment.runs.size(); ++r) {
    const auto& run = assignment.runs[r];
    for (std::size_t s = 0; s + 1 < run.stops.size(); ++s) {
      const auto& stop = run.stops[s];
      if (stop.station != a || !stop.departure || !in_slot(*stop.departure, grid, d, t)) continue;
      sum += assignment.loads[r].standing_density(s);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

OutcomePanel build_panel(const Dataset& ds, const NetworkGraph& graph, const AssignmentResult& assignment,
                         const std::vector<Day>& days) {
  const auto& grid = ds.topology.grid;
  const auto A = ds.topology.station_count();
  const int T = grid.count();
  OutcomePanel panel(A, days, T);
  const std::size_t cells = A * days.size() * static_cast<std::size_t>(T);

  auto cell = [&](StationIndex a, Day d, int t) -> std::optional<std::size_t> {
    auto di = panel.day_index(d);
    if (!di) return std::nullopt;
    return (a * days.size() + *di) * static_cast<std::size_t>(T) + static_cast<std::size_t>(t);
  };

  std::vector<long long> entries(cells, 0), exits(cells, 0), jt_seconds(cells, 0);
  std::vector<double> speed_sum(cells, 0.0);
  std::vector<bool> abandoned(cells, false);
  std::vector<double> density_sum(cells, 0.0);
  std::vector<long long> trains(cells, 0);

  // Floating sums are accumulated in canonical trip order so that row order never matters.
  std::vector<std::size_t> order(ds.trips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) {
    const auto& t = ds.trips[i];
    return std::tie(t.tap_in, t.origin, t.dest, t.tap_out, t.card_id);
  };
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return key(x) < key(y); });
  for (std::size_t i : order) {
    const auto& trip = ds.trips[i];
    const auto [d, t] = entry_slot(trip, grid);
    if (auto c = cell(trip.origin, d, t)) {
      ++entries[*c];
      jt_seconds[*c] += trip.journey_time().count();
      speed_sum[*c] += trip_speed_kmh(trip, graph);
    }
    const auto [xd, xt] = exit_slot(trip, grid);
    if (auto c = cell(trip.dest, xd, xt)) ++exits[*c];
  }
  for (const auto& ab : ds.abandonments) {
    if (!grid.in_service(ab.tap_in)) continue;
    if (auto c = cell(ab.origin, day_of(ab.tap_in), interval_of(ab.tap_in, grid))) abandoned[*c] = true;
  }
  for (std::size_t r = 0; r < assignment.runs.size(); ++r) {
    const auto& run = assignment.runs[r];
    for (std::size_t s = 0; s + 1 < run.stops.size(); ++s) {
      const auto& stop = run.stops[s];
      if (!stop.departure || !grid.in_service(*stop.departure)) continue;
      if (auto c = cell(stop.station, day_of(*stop.departure), interval_of(*stop.departure, grid))) {
        density_sum[*c] += assignment.loads[r].standing_density(s);
        ++trains[*c];
      }
    }
  }

  for (StationIndex a = 0; a < A; ++a) {
    for (std::size_t di = 0; di < days.size(); ++di) {
      for (int t = 0; t < T; ++t) {
        const auto c = (a * days.size() + di) * static_cast<std::size_t>(T) + static_cast<std::size_t>(t);
        panel.at(Outcome::entry_ridership, a, di, t) = static_cast<double>(entries[c]);
        panel.at(Outcome::exit_ridership, a, di, t) = static_cast<double>(exits[c]);
        if (entries[c] > 0) {
          const auto n = static_cast<double>(entries[c]);
          panel.at(Outcome::avg_journey_time, a, di, t) = static_cast<double>(jt_seconds[c]) / n / 60.0;
          panel.at(Outcome::avg_speed, a, di, t) = speed_sum[c] / n;
        } else if (abandoned[c]) {
          panel.at(Outcome::avg_speed, a, di, t) = 0.0;
        }
        if (trains[c] > 0)
          panel.at(Outcome::crowding_density, a, di, t) = density_sum[c] / static_cast<double>(trains[c]);
      }
    }
  }
  return panel;
}

OutcomePanel build_panel(const Dataset& ds, const NetworkGraph& graph, const AssignmentConfig& config) {
  const auto assignment = assign_passengers(ds.trips, ds.avl, graph, config);
  return build_panel(ds, graph, assignment, ds.analysis_days());
}

void write_panel_csv(const std::filesystem::path& path, const OutcomePanel& panel, const Topology& topology) {
  csv::Writer w(path, {"station", "day", "interval", "entry", "exit", "jt_min", "speed_kmh", "density"});
  for (StationIndex a = 0; a < panel.station_count(); ++a) {
    for (std::size_t d = 0; d < panel.days().size(); ++d) {
      for (int t = 0; t < panel.interval_count(); ++t) {
        w.row({topology.stations[a].id, format_date(panel.days()[d]), std::to_string(t),
               csv::format_double(panel.at(Outcome::entry_ridership, a, d, t), 0),
               csv::format_double(panel.at(Outcome::exit_ridership, a, d, t), 0),
               csv::format_double(panel.at(Outcome::avg_journey_time, a, d, t), 4),
               csv::format_double(panel.at(Outcome::avg_speed, a, d, t), 4),
               csv::format_double(panel.at(Outcome::crowding_density, a, d, t), 4)});
      }
    }
  }
  w.close();
}

}  // namespace metroscm
