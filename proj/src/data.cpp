#include "metroscm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include "json.hpp"

#include "metroscm/csv.hpp"

namespace metroscm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Direction d) { return d == Direction::up ? "up" : "down"; }
std::string_view to_string(AvlEvent e) { return e == AvlEvent::arrival ? "arrival" : "departure"; }
std::string_view to_string(IncidentType t) { return t == IncidentType::primary ? "primary" : "secondary"; }
std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::concert: return "concert";
    case EventKind::sports: return "sports";
    case EventKind::exhibition: return "exhibition";
  }
  return "concert";
}

std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "up") return Direction::up;
  if (s == "down") return Direction::down;
  return std::nullopt;
}
std::optional<AvlEvent> parse_avl_event(std::string_view s) {
  if (s == "arrival") return AvlEvent::arrival;
  if (s == "departure") return AvlEvent::departure;
  return std::nullopt;
}
std::optional<IncidentType> parse_incident_type(std::string_view s) {
  if (s == "primary") return IncidentType::primary;
  if (s == "secondary") return IncidentType::secondary;
  return std::nullopt;
}
std::optional<EventKind> parse_event_kind(std::string_view s) {
  if (s == "concert") return EventKind::concert;
  if (s == "sports") return EventKind::sports;
  if (s == "exhibition") return EventKind::exhibition;
  return std::nullopt;
}

// ---------------------------------------------------------------- topology

std::optional<double> Line::headway_at(Seconds tod) const {
  for (const auto& p : headway_periods)
    if (tod >= p.start && tod < p.end) return p.headway_s;
  return scheduled_headway_s;
}

std::optional<std::size_t> Line::position(StationIndex s) const {
  auto it = std::find(stations.begin(), stations.end(), s);
  if (it == stations.end()) return std::nullopt;
  return static_cast<std::size_t>(it - stations.begin());
}

std::optional<StationIndex> Topology::find_station(std::string_view id) const {
  for (std::size_t i = 0; i < stations.size(); ++i)
    if (stations[i].id == id) return static_cast<StationIndex>(i);
  return std::nullopt;
}

std::optional<LineIndex> Topology::find_line(std::string_view id) const {
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (lines[i].id == id) return static_cast<LineIndex>(i);
  return std::nullopt;
}

void Topology::finalize() {
  grid.validate();
  if (stations.empty()) throw InputError("topology has no stations");
  std::set<std::string> ids;
  for (auto& s : stations) {
    if (s.id.empty()) throw InputError("station with empty id");
    if (!ids.insert(s.id).second) throw InputError(fmt::format("duplicate station id '{}'", s.id));
    s.lines.clear();
  }
  std::set<std::string> line_ids;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto& line = lines[li];
    if (!line_ids.insert(line.id).second) throw InputError(fmt::format("duplicate line id '{}'", line.id));
    if (line.stations.size() < 2) throw InputError(fmt::format("line '{}' needs at least two stations", line.id));
    if (line.seats_per_train < 0 || !(line.floor_area_m2 > 0.0))
      throw InputError(fmt::format("line '{}' needs seats >= 0 and floor area > 0", line.id));
    std::set<StationIndex> seen;
    for (auto s : line.stations) {
      if (s >= stations.size()) throw InputError(fmt::format("line '{}' references unknown station", line.id));
      if (!seen.insert(s).second) throw InputError(fmt::format("line '{}' visits a station twice", line.id));
      stations[s].lines.push_back(static_cast<LineIndex>(li));
    }
  }
  for (const auto& e : edges) {
    if (e.from >= stations.size() || e.to >= stations.size())
      throw InputError("edge endpoint does not exist");
    if (e.line >= lines.size()) throw InputError("edge references unknown line");
    if (!(e.km > 0.0)) throw InputError(fmt::format("edge {}-{} must have positive track length",
                                                    stations[e.from].id, stations[e.to].id));
    const auto& line = lines[e.line];
    if (!line.position(e.from) || !line.position(e.to))
      throw InputError(fmt::format("edge {}-{} endpoints are not on line '{}'", stations[e.from].id,
                                   stations[e.to].id, line.id));
  }
  for (const auto& line : lines) {
    const LineIndex li = static_cast<LineIndex>(&line - lines.data());
    for (std::size_t i = 0; i + 1 < line.stations.size(); ++i) {
      const auto a = line.stations[i], b = line.stations[i + 1];
      const bool found = std::any_of(edges.begin(), edges.end(), [&](const Edge& e) {
        return e.line == li && ((e.from == a && e.to == b) || (e.from == b && e.to == a));
      });
      if (!found)
        throw InputError(fmt::format("line '{}' has no edge between {} and {}", line.id, stations[a].id,
                                     stations[b].id));
    }
  }
}

Topology parse_topology_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(fmt::format("topology.json: {}", e.what()));
  }
  Topology topo;
  try {
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      topo.grid.service_start = parse_clock(g.value("service_start", std::string("06:00")));
      topo.grid.service_end = parse_clock(g.value("service_end", std::string("24:00")));
      topo.grid.interval_length = Seconds{g.value("interval_minutes", 15) * 60};
    }
    for (const auto& s : doc.at("stations")) {
      Station st;
      st.id = s.at("id").get<std::string>();
      st.name = s.value("name", st.id);
      st.latitude = s.value("lat", std::numeric_limits<double>::quiet_NaN());
      st.longitude = s.value("lon", std::numeric_limits<double>::quiet_NaN());
      topo.stations.push_back(std::move(st));
    }
    for (const auto& l : doc.at("lines")) {
      Line line;
      line.id = l.at("id").get<std::string>();
      for (const auto& sid : l.at("stations")) {
        auto idx = topo.find_station(sid.get<std::string>());
        if (!idx) throw InputError(fmt::format("line '{}' references unknown station '{}'", line.id,
                                               sid.get<std::string>()));
        line.stations.push_back(*idx);
      }
      line.seats_per_train = l.at("seats_per_train").get<int>();
      line.floor_area_m2 = l.at("floor_area_m2").get<double>();
      if (l.contains("scheduled_headway_s")) line.scheduled_headway_s = l.at("scheduled_headway_s").get<double>();
      if (l.contains("headway_periods")) {
        for (const auto& p : l.at("headway_periods")) {
          line.headway_periods.push_back({parse_clock(p.at("start").get<std::string>()),
                                          parse_clock(p.at("end").get<std::string>()),
                                          p.at("headway_s").get<double>()});
        }
      }
      topo.lines.push_back(std::move(line));
    }
    for (const auto& e : doc.at("edges")) {
      Edge edge;
      const auto from = e.at("from").get<std::string>();
      const auto to = e.at("to").get<std::string>();
      const auto line = e.at("line").get<std::string>();
      auto fi = topo.find_station(from), ti = topo.find_station(to);
      auto li = topo.find_line(line);
      if (!fi || !ti) throw InputError(fmt::format("edge {}-{} references an unknown station", from, to));
      if (!li) throw InputError(fmt::format("edge {}-{} references unknown line '{}'", from, to, line));
      edge.from = *fi;
      edge.to = *ti;
      edge.line = *li;
      edge.km = e.at("km").get<double>();
      topo.edges.push_back(edge);
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("topology.json schema: {}", e.what()));
  } catch (const TimeParseError& e) {
    throw InputError(fmt::format("topology.json: {}", e.what()));
  }
  try {
    topo.finalize();
  } catch (const std::invalid_argument& e) {
    throw InputError(fmt::format("topology.json: {}", e.what()));
  }
  return topo;
}

Topology read_topology_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("missing file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_topology_json(buf.str());
}

std::string topology_to_json(const Topology& topo) {
  json doc;
  auto clock = [](Seconds s) {
    const auto text = format_clock(s);
    return text.substr(0, 5) + (text.substr(6) == "00" ? "" : text.substr(5));
  };
  doc["grid"] = {{"service_start", clock(topo.grid.service_start)},
                 {"service_end", clock(topo.grid.service_end)},
                 {"interval_minutes", topo.grid.interval_length.count() / 60}};
  doc["stations"] = json::array();
  for (const auto& s : topo.stations) {
    json st{{"id", s.id}, {"name", s.name}};
    if (std::isfinite(s.latitude) && std::isfinite(s.longitude)) {
      st["lat"] = s.latitude;
      st["lon"] = s.longitude;
    }
    doc["stations"].push_back(std::move(st));
  }
  doc["lines"] = json::array();
  for (const auto& l : topo.lines) {
    json line{{"id", l.id}, {"seats_per_train", l.seats_per_train}, {"floor_area_m2", l.floor_area_m2}};
    line["stations"] = json::array();
    for (auto s : l.stations) line["stations"].push_back(topo.stations[s].id);
    if (l.scheduled_headway_s) line["scheduled_headway_s"] = *l.scheduled_headway_s;
    if (!l.headway_periods.empty()) {
      line["headway_periods"] = json::array();
      for (const auto& p : l.headway_periods)
        line["headway_periods"].push_back({{"start", clock(p.start)}, {"end", clock(p.end)}, {"headway_s", p.headway_s}});
    }
    doc["lines"].push_back(std::move(line));
  }
  doc["edges"] = json::array();
  for (const auto& e : topo.edges)
    doc["edges"].push_back({{"from", topo.stations[e.from].id},
                            {"to", topo.stations[e.to].id},
                            {"line", topo.lines[e.line].id},
                            {"km", e.km}});
  return doc.dump(2) + "\n";
}

void write_topology_json(const fs::path& path, const Topology& topo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << topology_to_json(topo);
}

// ---------------------------------------------------------------- weather

WeatherTable::WeatherTable(std::vector<WeatherRecord> hourly) : hourly_(std::move(hourly)) {
  std::sort(hourly_.begin(), hourly_.end(), [](const auto& a, const auto& b) { return a.hour < b.hour; });
}

std::optional<WeatherSample> WeatherTable::at(Timestamp ts) const {
  const auto hour = std::chrono::floor<std::chrono::hours>(ts);
  auto it = std::lower_bound(hourly_.begin(), hourly_.end(), hour,
                             [](const WeatherRecord& r, Timestamp h) { return r.hour < h; });
  if (it == hourly_.end() || it->hour != hour) return std::nullopt;
  return it->sample;
}

std::optional<WeatherSample> WeatherTable::at(Day day, int interval, const ServiceGrid& grid) const {
  return at(grid.interval_begin(day, interval));
}

std::vector<WeatherIntervalRow> expand_weather(const WeatherTable& weather, const Topology& topology) {
  std::vector<WeatherIntervalRow> rows;
  const auto& grid = topology.grid;
  for (const auto& rec : weather.hourly()) {
    for (Timestamp ts = rec.hour; ts < rec.hour + std::chrono::hours{1}; ts += grid.interval_length) {
      if (!grid.in_service(ts)) continue;
      const int t = interval_of(ts, grid);
      for (StationIndex s = 0; s < topology.station_count(); ++s)
        rows.push_back({s, day_of(ts), t, rec.sample});
    }
  }
  return rows;
}

// ---------------------------------------------------------------- report

void ValidationReport::reject(const std::string& table, std::size_t row, std::string reason) {
  ++tables[table].rejected;
  issues.push_back({table, row, std::move(reason)});
}

std::size_t ValidationReport::rejected(const std::string& table) const {
  auto it = tables.find(table);
  return it == tables.end() ? 0 : it->second.rejected;
}

std::size_t ValidationReport::accepted(const std::string& table) const {
  auto it = tables.find(table);
  return it == tables.end() ? 0 : it->second.accepted;
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& [name, count] : tables)
    out += fmt::format("{}: {} accepted, {} rejected\n", name, count.accepted, count.rejected);
  constexpr std::size_t kMaxListed = 20;
  for (std::size_t i = 0; i < issues.size() && i < kMaxListed; ++i)
    out += fmt::format("  {} row {}: {}\n", issues[i].table, issues[i].row, issues[i].reason);
  if (issues.size() > kMaxListed) out += fmt::format("  ... {} more\n", issues.size() - kMaxListed);
  return out;
}

// ---------------------------------------------------------------- dataset

const CalendarDay* Dataset::calendar_day(Day d) const {
  auto it = std::lower_bound(calendar.begin(), calendar.end(), d,
                             [](const CalendarDay& c, Day x) { return c.date < x; });
  return (it != calendar.end() && it->date == d) ? &*it : nullptr;
}

std::vector<Day> Dataset::analysis_days() const {
  std::vector<Day> days;
  for (const auto& c : calendar)
    if (c.analysis_day()) days.push_back(c.date);
  return days;
}

std::map<std::string, fs::path> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("missing manifest '{}'", path.string()));
  static const std::set<std::string> known{"topology", "trips",    "avl",      "incidents",
                                           "weather",  "events",   "calendar", "abandonments"};
  std::map<std::string, fs::path> entries;
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(fmt::format("{}:{}: expected key = value", path.string(), number));
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (!known.count(key)) throw InputError(fmt::format("{}:{}: unknown key '{}'", path.string(), number, key));
    fs::path p(value);
    if (p.is_relative()) p = path.parent_path() / p;
    entries[key] = p;
  }
  for (const char* required : {"topology", "trips", "avl"})
    if (!entries.count(required))
      throw InputError(fmt::format("{}: missing required key '{}'", path.string(), required));
  return entries;
}

namespace {

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw InputError(fmt::format("missing file '{}'", p.string()));
}

template <class Fn>
void read_rows(const fs::path& path, const std::vector<std::string>& header, const std::string& table,
               ValidationReport& report, Fn&& on_row) {
  require_file(path);
  try {
    csv::Reader reader(path, header);
    while (true) {
      std::optional<std::vector<std::string>> fields;
      try {
        fields = reader.next();
      } catch (const csv::CsvError& e) {
        report.reject(table, reader.line_number(), e.what());
        continue;
      }
      if (!fields) break;
      if (fields->size() != header.size()) {
        report.reject(table, reader.line_number(),
                      fmt::format("expected {} fields, got {}", header.size(), fields->size()));
        continue;
      }
      try {
        if (auto reason = on_row(*fields, reader.line_number()); !reason.empty())
          report.reject(table, reader.line_number(), std::move(reason));
        else
          report.accept(table);
      } catch (const TimeParseError& e) {
        report.reject(table, reader.line_number(), e.what());
      } catch (const csv::CsvError& e) {
        report.reject(table, reader.line_number(), e.what());
      }
    }
  } catch (const csv::CsvError& e) {
    throw InputError(e.what());
  }
}

bool is_true_flag(std::string_view s) { return s == "1" || s == "true" || s == "yes"; }

// Runs whose event times go backwards along the line are partially rejected.
std::vector<std::size_t> avl_order_violations(const std::vector<AvlRecord>& avl, const Topology& topo) {
  std::map<std::tuple<std::string, std::string, LineIndex, Direction>, std::vector<std::size_t>> runs;
  for (std::size_t i = 0; i < avl.size(); ++i)
    runs[{avl[i].train_id, avl[i].service_id, avl[i].line, avl[i].direction}].push_back(i);
  std::vector<std::size_t> bad;
  for (auto& [key, rows] : runs) {
    const auto& line = topo.lines[std::get<2>(key)];
    const bool up = std::get<3>(key) == Direction::up;
    auto order = [&](std::size_t r) {
      auto pos = static_cast<long>(*line.position(avl[r].station));
      if (!up) pos = -pos;
      return std::make_tuple(pos, avl[r].event == AvlEvent::departure ? 1 : 0, avl[r].time, r);
    };
    std::sort(rows.begin(), rows.end(), [&](auto a, auto b) { return order(a) < order(b); });
    std::optional<Timestamp> last;
    for (auto r : rows) {
      if (last && avl[r].time < *last) {
        bad.push_back(r);
        continue;
      }
      last = avl[r].time;
    }
  }
  std::sort(bad.begin(), bad.end());
  return bad;
}

}  // namespace

void canonicalize(Dataset& ds) {
  auto trip_key = [](const TripRecord& t) { return std::tie(t.tap_in, t.origin, t.dest, t.tap_out, t.card_id); };
  std::sort(ds.trips.begin(), ds.trips.end(), [&](const auto& a, const auto& b) { return trip_key(a) < trip_key(b); });
  auto ab_key = [](const AbandonRecord& t) {
    return std::tie(t.tap_in, t.origin, t.dest, t.abandon_time, t.card_id);
  };
  std::sort(ds.abandonments.begin(), ds.abandonments.end(),
            [&](const auto& a, const auto& b) { return ab_key(a) < ab_key(b); });
  auto avl_key = [](const AvlRecord& r) {
    return std::tie(r.time, r.line, r.direction, r.station, r.event, r.train_id, r.service_id);
  };
  std::sort(ds.avl.begin(), ds.avl.end(), [&](const auto& a, const auto& b) { return avl_key(a) < avl_key(b); });
  auto inc_key = [](const IncidentLogRecord& r) {
    return std::tie(r.start, r.station, r.line, r.end, r.cause, r.type);
  };
  std::sort(ds.incidents.begin(), ds.incidents.end(),
            [&](const auto& a, const auto& b) { return inc_key(a) < inc_key(b); });
  std::sort(ds.events.begin(), ds.events.end(),
            [](const auto& a, const auto& b) { return std::tie(a.date, a.kind) < std::tie(b.date, b.kind); });
  ds.events.erase(std::unique(ds.events.begin(), ds.events.end()), ds.events.end());
  std::sort(ds.calendar.begin(), ds.calendar.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
  if (ds.calendar.empty()) {
    std::set<Day> days;
    for (const auto& t : ds.trips) days.insert(day_of(t.tap_in));
    for (auto d : days) ds.calendar.push_back({d, false, true});
  }
}

Dataset load_dataset(const fs::path& manifest_path, const LoadOptions& options) {
  const auto entries = read_manifest(manifest_path);
  Dataset ds;
  ds.topology = read_topology_json(entries.at("topology"));
  const auto& topo = ds.topology;
  auto& report = ds.report;

  auto station = [&](const std::string& id) -> std::optional<StationIndex> { return topo.find_station(id); };

  if (auto it = entries.find("calendar"); it != entries.end()) {
    std::set<Day> seen;
    read_rows(it->second, {"date", "holiday", "complete"}, "calendar", report,
              [&](const std::vector<std::string>& f, std::size_t) -> std::string {
                CalendarDay c{parse_date(f[0]), is_true_flag(f[1]), is_true_flag(f[2])};
                if (!seen.insert(c.date).second) return "duplicate calendar date";
                ds.calendar.push_back(c);
                return {};
              });
    std::sort(ds.calendar.begin(), ds.calendar.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
  }
  const bool have_calendar = !ds.calendar.empty();

  read_rows(entries.at("trips"), {"card_id", "origin", "dest", "tap_in", "tap_out"}, "trips", report,
            [&](const std::vector<std::string>& f, std::size_t) -> std::string {
              if (f[0].empty()) return "empty card_id";
              auto o = station(f[1]);
              auto d = station(f[2]);
              if (!o) return fmt::format("unknown origin station '{}'", f[1]);
              if (!d) return fmt::format("unknown destination station '{}'", f[2]);
              if (*o == *d) return "origin equals destination";
              TripRecord t{f[0], *o, *d, parse_timestamp(f[3]), parse_timestamp(f[4])};
              if (t.tap_out <= t.tap_in) return "tap_out must be after tap_in";
              if (!topo.grid.in_service(t.tap_in)) return "tap_in outside service hours";
              if (have_calendar && !ds.calendar_day(day_of(t.tap_in))) return "trip day not in calendar";
              ds.trips.push_back(std::move(t));
              return {};
            });

  if (auto it = entries.find("abandonments"); it != entries.end()) {
    read_rows(it->second, {"card_id", "origin", "dest", "tap_in", "abandon_time"}, "abandonments", report,
              [&](const std::vector<std::string>& f, std::size_t) -> std::string {
                auto o = station(f[1]);
                auto d = station(f[2]);
                if (!o || !d) return "unknown station";
                AbandonRecord a{f[0], *o, *d, parse_timestamp(f[3]), parse_timestamp(f[4])};
                if (a.abandon_time < a.tap_in) return "abandon_time precedes tap_in";
                if (!topo.grid.in_service(a.tap_in)) return "tap_in outside service hours";
                ds.abandonments.push_back(std::move(a));
                return {};
              });
  }

  std::vector<std::size_t> avl_rows;
  read_rows(entries.at("avl"), {"train_id", "service_id", "station", "line", "direction", "event", "time"}, "avl",
            report, [&](const std::vector<std::string>& f, std::size_t row) -> std::string {
              auto s = station(f[2]);
              auto l = topo.find_line(f[3]);
              auto dir = parse_direction(f[4]);
              auto ev = parse_avl_event(f[5]);
              if (!s) return fmt::format("unknown station '{}'", f[2]);
              if (!l) return fmt::format("unknown line '{}'", f[3]);
              if (!dir) return fmt::format("bad direction '{}'", f[4]);
              if (!ev) return fmt::format("bad event '{}'", f[5]);
              if (!topo.lines[*l].position(*s)) return "station does not belong to line";
              ds.avl.push_back({f[0], f[1], *s, *l, *dir, *ev, parse_timestamp(f[6])});
              avl_rows.push_back(row);
              return {};
            });
  if (auto bad = avl_order_violations(ds.avl, topo); !bad.empty()) {
    for (auto it = bad.rbegin(); it != bad.rend(); ++it) {
      // Re-classify the row from accepted to rejected.
      --report.tables["avl"].accepted;
      report.reject("avl", avl_rows[*it], "time decreases along the run's station sequence");
      ds.avl.erase(ds.avl.begin() + static_cast<long>(*it));
    }
  }

  if (auto it = entries.find("incidents"); it != entries.end()) {
    read_rows(it->second, {"start", "end", "station", "line", "cause", "type"}, "incidents", report,
              [&](const std::vector<std::string>& f, std::size_t) -> std::string {
                auto s = station(f[2]);
                auto l = topo.find_line(f[3]);
                auto type = parse_incident_type(f[5]);
                if (!s) return fmt::format("unknown station '{}'", f[2]);
                if (!l) return fmt::format("unknown line '{}'", f[3]);
                if (!type) return fmt::format("bad incident type '{}'", f[5]);
                IncidentLogRecord r{parse_timestamp(f[0]), parse_timestamp(f[1]), *s, *l, f[4], *type};
                if (r.end <= r.start) return "end must be after start";
                ds.incidents.push_back(std::move(r));
                return {};
              });
  }

  if (auto it = entries.find("weather"); it != entries.end()) {
    std::vector<WeatherRecord> hourly;
    std::set<Timestamp> hours;
    read_rows(it->second, {"hour", "temperature_c", "wind_kmh", "rain_mmh"}, "weather", report,
              [&](const std::vector<std::string>& f, std::size_t) -> std::string {
                WeatherRecord w{parse_timestamp(f[0]),
                                {csv::parse_double(f[1]), csv::parse_double(f[2]), csv::parse_double(f[3])}};
                if (time_of_day(w.hour) % std::chrono::hours{1} != Seconds{0}) return "hour must be on the hour";
                if (w.sample.temperature_c < options.min_temperature_c ||
                    w.sample.temperature_c > options.max_temperature_c)
                  return "temperature outside plausibility band";
                if (!(w.sample.wind_kmh >= 0.0)) return "negative wind speed";
                if (!(w.sample.rain_mmh >= 0.0)) return "negative rain";
                if (!hours.insert(w.hour).second) return "duplicate hour";
                hourly.push_back(w);
                return {};
              });
    ds.weather = WeatherTable(std::move(hourly));
  }

  if (auto it = entries.find("events"); it != entries.end()) {
    read_rows(it->second, {"date", "kind"}, "events", report,
              [&](const std::vector<std::string>& f, std::size_t) -> std::string {
                auto kind = parse_event_kind(f[1]);
                if (!kind) return fmt::format("unknown event kind '{}'", f[1]);
                ds.events.push_back({parse_date(f[0]), *kind});
                return {};
              });
  }

  canonicalize(ds);
  return ds;
}

// ---------------------------------------------------------------- writers

void write_trips_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"card_id", "origin", "dest", "tap_in", "tap_out"});
  const auto& st = ds.topology.stations;
  for (const auto& t : ds.trips)
    w.row({t.card_id, st[t.origin].id, st[t.dest].id, format_timestamp(t.tap_in), format_timestamp(t.tap_out)});
  w.close();
}

void write_abandonments_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"card_id", "origin", "dest", "tap_in", "abandon_time"});
  const auto& st = ds.topology.stations;
  for (const auto& a : ds.abandonments)
    w.row({a.card_id, st[a.origin].id, st[a.dest].id, format_timestamp(a.tap_in), format_timestamp(a.abandon_time)});
  w.close();
}

void write_avl_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"train_id", "service_id", "station", "line", "direction", "event", "time"});
  for (const auto& r : ds.avl)
    w.row({r.train_id, r.service_id, ds.topology.stations[r.station].id, ds.topology.lines[r.line].id,
           std::string(to_string(r.direction)), std::string(to_string(r.event)), format_timestamp(r.time)});
  w.close();
}

void write_incidents_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"start", "end", "station", "line", "cause", "type"});
  for (const auto& r : ds.incidents)
    w.row({format_timestamp(r.start), format_timestamp(r.end), ds.topology.stations[r.station].id,
           ds.topology.lines[r.line].id, r.cause, std::string(to_string(r.type))});
  w.close();
}

void write_weather_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"hour", "temperature_c", "wind_kmh", "rain_mmh"});
  for (const auto& r : ds.weather.hourly())
    w.row({format_timestamp(r.hour), csv::format_double(r.sample.temperature_c, 2),
           csv::format_double(r.sample.wind_kmh, 2), csv::format_double(r.sample.rain_mmh, 2)});
  w.close();
}

void write_events_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"date", "kind"});
  for (const auto& e : ds.events) w.row({format_date(e.date), std::string(to_string(e.kind))});
  w.close();
}

void write_calendar_csv(const fs::path& path, const Dataset& ds) {
  csv::Writer w(path, {"date", "holiday", "complete"});
  for (const auto& c : ds.calendar) w.row({format_date(c.date), c.holiday ? "1" : "0", c.complete ? "1" : "0"});
  w.close();
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  write_topology_json(dir / "topology.json", ds.topology);
  write_trips_csv(dir / "trips.csv", ds);
  write_avl_csv(dir / "avl.csv", ds);
  write_incidents_csv(dir / "incidents.csv", ds);
  write_weather_csv(dir / "weather.csv", ds);
  write_events_csv(dir / "events.csv", ds);
  write_calendar_csv(dir / "calendar.csv", ds);
  write_abandonments_csv(dir / "abandonments.csv", ds);
  std::ofstream m(dir / "manifest.txt", std::ios::binary);
  m << "# dataset manifest: key = path (relative to this file)\n"
       "topology = topology.json\n"
       "trips = trips.csv\n"
       "avl = avl.csv\n"
       "incidents = incidents.csv\n"
       "weather = weather.csv\n"
       "events = events.csv\n"
       "calendar = calendar.csv\n"
       "abandonments = abandonments.csv\n";
  if (!m) throw InputError(fmt::format("cannot write manifest in '{}'", dir.string()));
}

}  // namespace metroscm
