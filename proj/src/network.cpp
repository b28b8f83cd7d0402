#include "metroscm/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "metroscm/csv.hpp"

namespace metroscm {

namespace {

constexpr double kLengthTolerance = 1e-9;
constexpr LineIndex kNoLine = std::numeric_limits<LineIndex>::max();

struct Label {
  double km = 0.0;
  int transfers = 0;
  std::vector<StationIndex> path;
  std::vector<LineIndex> edge_lines;
};

struct Adjacent {
  StationIndex to;
  LineIndex line;
  double km;
};

bool ids_less(const Topology& topo, const std::vector<StationIndex>& a, const std::vector<StationIndex>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [&](StationIndex x, StationIndex y) {
    return topo.stations[x].id < topo.stations[y].id;
  });
}

bool better(const Topology& topo, const Label& a, const Label& b) {
  if (std::abs(a.km - b.km) > kLengthTolerance) return a.km < b.km;
  if (a.transfers != b.transfers) return a.transfers < b.transfers;
  return ids_less(topo, a.path, b.path);
}

Route to_route(const Topology& topo, const Label& label) {
  Route r;
  r.stations = label.path;
  r.km = label.km;
  for (std::size_t e = 0; e < label.edge_lines.size(); ++e) {
    const auto line = label.edge_lines[e];
    if (r.legs.empty() || r.legs.back().line != line) {
      RouteLeg leg;
      leg.line = line;
      leg.stops.push_back(label.path[e]);
      r.legs.push_back(std::move(leg));
    }
    r.legs.back().stops.push_back(label.path[e + 1]);
  }
  for (auto& leg : r.legs) {
    const auto& line = topo.lines[leg.line];
    leg.direction = *line.position(leg.stops.front()) < *line.position(leg.stops.back()) ? Direction::up
                                                                                         : Direction::down;
  }
  return r;
}

}  // namespace

NetworkGraph::NetworkGraph(Topology topology) : topology_(std::move(topology)) {
  const auto n = station_count();
  std::vector<std::vector<Adjacent>> adj(n);
  for (const auto& e : topology_.edges) {
    adj[e.from].push_back({e.to, e.line, e.km});
    adj[e.to].push_back({e.from, e.line, e.km});
  }
  routes_.assign(n * n, std::nullopt);
  distance_.assign(n * n, std::numeric_limits<double>::infinity());

  const std::size_t lines = topology_.lines.size();
  auto state_of = [&](StationIndex s, LineIndex l) { return s * (lines + 1) + (l == kNoLine ? lines : l); };

  for (StationIndex origin = 0; origin < n; ++origin) {
    std::vector<std::optional<Label>> labels(n * (lines + 1));
    std::vector<bool> settled(labels.size(), false);
    labels[state_of(origin, kNoLine)] = Label{0.0, 0, {origin}, {}};
    while (true) {
      std::size_t best = labels.size();
      for (std::size_t s = 0; s < labels.size(); ++s) {
        if (settled[s] || !labels[s]) continue;
        if (best == labels.size() || better(topology_, *labels[s], *labels[best])) best = s;
      }
      if (best == labels.size()) break;
      settled[best] = true;
      const Label cur = *labels[best];
      const StationIndex at = cur.path.back();
      const LineIndex cur_line = cur.edge_lines.empty() ? kNoLine : cur.edge_lines.back();
      for (const auto& a : adj[at]) {
        if (std::find(cur.path.begin(), cur.path.end(), a.to) != cur.path.end()) continue;
        const auto target = state_of(a.to, a.line);
        if (settled[target]) continue;
        Label next = cur;
        next.km += a.km;
        if (cur_line != kNoLine && cur_line != a.line) ++next.transfers;
        next.path.push_back(a.to);
        next.edge_lines.push_back(a.line);
        if (!labels[target] || better(topology_, next, *labels[target])) labels[target] = std::move(next);
      }
    }
    for (StationIndex dest = 0; dest < n; ++dest) {
      const Label* best = nullptr;
      for (std::size_t l = 0; l <= lines; ++l) {
        const auto& lab = labels[dest * (lines + 1) + l];
        if (lab && (!best || better(topology_, *lab, *best))) best = &*lab;
      }
      if (best) routes_[slot(origin, dest)] = to_route(topology_, *best);
    }
  }
  // Distances are symmetric by construction: one summation per unordered pair.
  for (StationIndex o = 0; o < n; ++o) {
    for (StationIndex d = o; d < n; ++d) {
      if (!routes_[slot(o, d)]) continue;
      const double km = o == d ? 0.0 : routes_[slot(o, d)]->km;
      distance_[slot(o, d)] = km;
      distance_[slot(d, o)] = km;
    }
  }
}

bool NetworkGraph::reachable(StationIndex o, StationIndex d) const {
  return o < station_count() && d < station_count() && routes_[slot(o, d)].has_value();
}

bool NetworkGraph::connected() const {
  for (StationIndex d = 0; d < station_count(); ++d)
    if (!reachable(0, d)) return false;
  return true;
}

double NetworkGraph::shortest_distance(StationIndex o, StationIndex d) const {
  if (o >= station_count() || d >= station_count()) throw std::out_of_range("station index out of range");
  if (!routes_[slot(o, d)])
    throw UnreachableError(fmt::format("no path between {} and {}", topology_.stations[o].id,
                                       topology_.stations[d].id));
  return distance_[slot(o, d)];
}

const Route& NetworkGraph::route(StationIndex o, StationIndex d) const {
  if (o >= station_count() || d >= station_count()) throw std::out_of_range("station index out of range");
  if (!routes_[slot(o, d)])
    throw UnreachableError(fmt::format("no path between {} and {}", topology_.stations[o].id,
                                       topology_.stations[d].id));
  return *routes_[slot(o, d)];
}

void NetworkGraph::write_distances_csv(const std::filesystem::path& path) const {
  csv::Writer w(path, {"origin", "dest", "km"});
  for (StationIndex o = 0; o < station_count(); ++o)
    for (StationIndex d = 0; d < station_count(); ++d)
      if (reachable(o, d))
        w.row({topology_.stations[o].id, topology_.stations[d].id, csv::format_double(distance_[slot(o, d)], 4)});
  w.close();
}

// ------------------------------------------------------------ train runs

std::vector<TrainRun> build_runs(const std::vector<AvlRecord>& avl, const Topology& topo) {
  std::map<std::tuple<std::string, std::string, LineIndex, Direction>, std::vector<const AvlRecord*>> groups;
  for (const auto& r : avl) groups[{r.train_id, r.service_id, r.line, r.direction}].push_back(&r);

  std::vector<TrainRun> runs;
  runs.reserve(groups.size());
  for (auto& [key, events] : groups) {
    TrainRun run;
    run.train_id = std::get<0>(key);
    run.service_id = std::get<1>(key);
    run.line = std::get<2>(key);
    run.direction = std::get<3>(key);
    const auto& line = topo.lines[run.line];
    const bool up = run.direction == Direction::up;
    std::map<long, StopTime> by_position;
    for (const auto* e : events) {
      auto pos = static_cast<long>(*line.position(e->station));
      auto& stop = by_position[up ? pos : -pos];
      stop.station = e->station;
      if (e->event == AvlEvent::arrival)
        stop.arrival = e->time;
      else
        stop.departure = e->time;
    }
    for (auto& [pos, stop] : by_position) run.stops.push_back(stop);
    runs.push_back(std::move(run));
  }
  // Chronological order of first event; ties keep the key order.
  auto first_time = [](const TrainRun& r) {
    const auto& s = r.stops.front();
    return s.departure ? *s.departure : *s.arrival;
  };
  std::stable_sort(runs.begin(), runs.end(),
                   [&](const TrainRun& a, const TrainRun& b) { return first_time(a) < first_time(b); });
  return runs;
}

TrainIndex::TrainIndex(const std::vector<TrainRun>& runs, const Topology& topology)
    : runs_(&runs), stations_(topology.station_count()) {
  departures_.resize(topology.lines.size() * 2 * stations_);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    for (std::size_t i = 0; i < run.stops.size(); ++i)
      if (run.stops[i].departure)
        departures_[key(run.line, run.direction, run.stops[i].station)].push_back({*run.stops[i].departure, r, i});
  }
  for (auto& list : departures_)
    std::stable_sort(list.begin(), list.end(), [](const Departure& a, const Departure& b) { return a.time < b.time; });
}

std::optional<Boarding> TrainIndex::earliest(LineIndex line, Direction direction, StationIndex board,
                                             StationIndex alight, Timestamp ready) const {
  const auto& list = departures_[key(line, direction, board)];
  auto it = std::lower_bound(list.begin(), list.end(), ready,
                             [](const Departure& d, Timestamp t) { return d.time < t; });
  for (; it != list.end(); ++it) {
    const auto& run = (*runs_)[it->run];
    for (std::size_t j = it->stop + 1; j < run.stops.size(); ++j) {
      if (run.stops[j].station != alight) continue;
      const auto& stop = run.stops[j];
      const auto arrival = stop.arrival ? *stop.arrival : *stop.departure;
      return Boarding{it->run, it->stop, j, it->time, arrival};
    }
  }
  return std::nullopt;
}

std::optional<std::vector<Boarding>> plan_journey(const Route& route, const TrainIndex& index, Timestamp gate_time,
                                                  const AssignmentConfig& config) {
  std::vector<Boarding> legs;
  legs.reserve(route.legs.size());
  Timestamp ready = gate_time + config.access_time;
  for (const auto& leg : route.legs) {
    auto b = index.earliest(leg.line, leg.direction, leg.board(), leg.alight(), ready);
    if (!b) return std::nullopt;
    legs.push_back(*b);
    ready = b->arrival + config.transfer_time;
  }
  return legs;
}

double standing_density(int on_board, int seats, double floor_area_m2) {
  return static_cast<double>(std::max(on_board - seats, 0)) / floor_area_m2;
}

double TrainLoad::standing_density(std::size_t stop) const {
  return metroscm::standing_density(on_board.at(stop), seats, floor_area_m2);
}

AssignmentResult assign_passengers(const std::vector<TripRecord>& trips, const std::vector<AvlRecord>& avl,
                                   const NetworkGraph& graph, const AssignmentConfig& config) {
  const auto& topo = graph.topology();
  AssignmentResult result;
  result.runs = build_runs(avl, topo);
  const TrainIndex index(result.runs, topo);

  result.loads.resize(result.runs.size());
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    auto& load = result.loads[r];
    const auto& run = result.runs[r];
    load.run = r;
    load.boardings.assign(run.stops.size(), 0);
    load.alightings.assign(run.stops.size(), 0);
    load.on_board.assign(run.stops.size(), 0);
    load.seats = topo.lines[run.line].seats_per_train;
    load.floor_area_m2 = topo.lines[run.line].floor_area_m2;
  }

  result.journeys.resize(trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i) {
    const auto& trip = trips[i];
    if (!graph.reachable(trip.origin, trip.dest)) {
      ++result.infeasible;
      continue;
    }
    auto plan = plan_journey(graph.route(trip.origin, trip.dest), index, trip.tap_in, config);
    if (!plan) {
      ++result.infeasible;
      continue;
    }
    for (const auto& b : *plan) {
      ++result.loads[b.run].boardings[b.board_stop];
      ++result.loads[b.run].alightings[b.alight_stop];
    }
    result.journeys[i] = std::move(*plan);
  }

  for (auto& load : result.loads) {
    int running = 0;
    for (std::size_t s = 0; s < load.on_board.size(); ++s) {
      running += load.boardings[s] - load.alightings[s];
      load.on_board[s] = running;
    }
  }
  return result;
}

}  // namespace metroscm
