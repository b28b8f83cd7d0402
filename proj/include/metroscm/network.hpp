#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metroscm/data.hpp"

namespace metroscm {

class UnreachableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RouteLeg {
  LineIndex line = 0;
  Direction direction = Direction::up;
  std::vector<StationIndex> stops;  // boarding station first, alighting station last

  StationIndex board() const { return stops.front(); }
  StationIndex alight() const { return stops.back(); }
};

struct Route {
  std::vector<StationIndex> stations;
  std::vector<RouteLeg> legs;
  double km = 0.0;

  int edge_count() const { return stations.empty() ? 0 : static_cast<int>(stations.size()) - 1; }
  int interchanges() const { return legs.empty() ? 0 : static_cast<int>(legs.size()) - 1; }
};

/// Undirected track graph with all-pairs routes. The route between two
/// stations minimises track length, then the number of interchanges, then
/// compares station id sequences lexicographically.
class NetworkGraph {
 public:
  explicit NetworkGraph(Topology topology);

  const Topology& topology() const { return topology_; }
  std::size_t station_count() const { return topology_.station_count(); }

  double shortest_distance(StationIndex origin, StationIndex dest) const;
  const Route& route(StationIndex origin, StationIndex dest) const;
  int hop_distance(StationIndex origin, StationIndex dest) const { return route(origin, dest).edge_count(); }
  bool reachable(StationIndex origin, StationIndex dest) const;
  bool connected() const;

  /// origin,dest,km for every ordered reachable pair.
  void write_distances_csv(const std::filesystem::path& path) const;

 private:
  std::size_t slot(StationIndex o, StationIndex d) const { return o * station_count() + d; }

  Topology topology_;
  std::vector<std::optional<Route>> routes_;
  std::vector<double> distance_;
};

// ------------------------------------------------------------ train runs

struct StopTime {
  StationIndex station = 0;
  std::optional<Timestamp> arrival;
  std::optional<Timestamp> departure;
};

/// One trip of one train along a line in one direction, rebuilt from AVL.
struct TrainRun {
  std::string train_id;
  std::string service_id;
  LineIndex line = 0;
  Direction direction = Direction::up;
  std::vector<StopTime> stops;  // in travel order
};

/// Groups AVL events by (train_id, service_id, line, direction), stops ordered
/// along the direction of travel. Output order is deterministic.
std::vector<TrainRun> build_runs(const std::vector<AvlRecord>& avl, const Topology& topology);

struct Boarding {
  std::size_t run = 0;
  std::size_t board_stop = 0;
  std::size_t alight_stop = 0;
  Timestamp departure{};
  Timestamp arrival{};
};

/// Departure lookup per (line, direction, station).
class TrainIndex {
 public:
  TrainIndex(const std::vector<TrainRun>& runs, const Topology& topology);

  /// Earliest run departing `board` at or after `ready` that later reaches `alight`.
  std::optional<Boarding> earliest(LineIndex line, Direction direction, StationIndex board, StationIndex alight,
                                   Timestamp ready) const;

  const std::vector<TrainRun>& runs() const { return *runs_; }

 private:
  struct Departure {
    Timestamp time;
    std::size_t run;
    std::size_t stop;
  };
  std::size_t key(LineIndex line, Direction d, StationIndex s) const {
    return (static_cast<std::size_t>(line) * 2 + (d == Direction::up ? 0 : 1)) * stations_ + s;
  }

  const std::vector<TrainRun>* runs_;
  std::size_t stations_;
  std::vector<std::vector<Departure>> departures_;
};

struct AssignmentConfig {
  Seconds access_time{0};    // gate to platform at the origin
  Seconds transfer_time{0};  // alighting to the next platform at an interchange
};

/// Leg-by-leg train choice for a journey starting at the gate at `gate_time`.
/// Empty when some leg has no feasible train.
std::optional<std::vector<Boarding>> plan_journey(const Route& route, const TrainIndex& index, Timestamp gate_time,
                                                  const AssignmentConfig& config);

struct TrainLoad {
  std::size_t run = 0;
  std::vector<int> boardings;   // per stop
  std::vector<int> alightings;  // per stop
  std::vector<int> on_board;    // per stop: passengers on the segment departing that stop
  int seats = 0;
  double floor_area_m2 = 1.0;

  /// Standing passengers per m2 on the segment departing `stop`.
  double standing_density(std::size_t stop) const;
};

double standing_density(int on_board, int seats, double floor_area_m2);

struct AssignmentResult {
  std::vector<TrainRun> runs;
  std::vector<TrainLoad> loads;                 // parallel to runs
  std::vector<std::vector<Boarding>> journeys;  // parallel to trips; empty if infeasible
  std::size_t infeasible = 0;
};

AssignmentResult assign_passengers(const std::vector<TripRecord>& trips, const std::vector<AvlRecord>& avl,
                                   const NetworkGraph& graph, const AssignmentConfig& config = {});

}  // namespace metroscm
