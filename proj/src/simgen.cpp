#include "metroscm/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "metroscm/csv.hpp"
#include "metroscm/parallel.hpp"

namespace metroscm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kCovariateStream = 1;
constexpr std::uint32_t kPassengerStream = 2;

std::mt19937_64 stream(std::uint64_t seed, Day day, std::uint32_t purpose, std::uint32_t index) {
  const auto d = static_cast<std::uint32_t>(day.time_since_epoch().count());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), d, purpose, index};
  return std::mt19937_64(seq);
}

Day add_days(Day d, int n) { return d + std::chrono::days{n}; }

}  // namespace

// ------------------------------------------------------------ spec

std::vector<Day> SimSpec::calendar_days() const {
  std::vector<Day> out;
  for (Day d = first_day; static_cast<int>(out.size()) < days; d = add_days(d, 1))
    if (is_weekday(d)) out.push_back(d);
  return out;
}

void SimSpec::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("simulation spec: " + msg); };
  if (days < 1) fail("days must be at least 1");
  if (topology.stations.empty()) fail("topology has no stations");
  if (timetable.speed_kmh <= 0.0) fail("speed_kmh must be positive");
  if (timetable.rain_slowdown < 0.0 || timetable.wind_slowdown < 0.0) fail("slowdown coefficients must be non-negative");
  if (timetable.dwell.count() < 0 || timetable.min_separation.count() < 0) fail("negative dwell or separation");
  if (timetable.last_departure < timetable.first_departure) fail("last departure before first departure");
  for (const auto& line : topology.lines) {
    if (line.headway_periods.empty() && !line.scheduled_headway_s) fail(fmt::format("line {} has no headway", line.id));
    if (line.scheduled_headway_s && *line.scheduled_headway_s <= 0.0) fail(fmt::format("line {} headway must be positive", line.id));
    for (const auto& p : line.headway_periods)
      if (p.headway_s <= 0.0) fail(fmt::format("line {} headway must be positive", line.id));
  }
  if (demand.base_per_interval < 0.0) fail("base_per_interval must be non-negative");
  if (!demand.station_weight.empty() && demand.station_weight.size() != topology.station_count())
    fail("station_weight needs one entry per station");
  for (double w : demand.station_weight)
    if (w < 0.0) fail("station weights must be non-negative");
  const auto hours = static_cast<std::size_t>((topology.grid.service_end - topology.grid.service_start).count() / 3600);
  if (!demand.hourly_profile.empty() && demand.hourly_profile.size() != hours)
    fail(fmt::format("hourly_profile needs {} entries", hours));
  for (double f : demand.hourly_profile)
    if (f < 0.0) fail("hourly profile must be non-negative");
  for (double f : demand.weekday_factor)
    if (f < 0.0) fail("weekday factors must be non-negative");
  if (demand.distance_decay_hops <= 0.0) fail("distance_decay_hops must be positive");
  if (demand.day_noise_sd < 0.0 || demand.station_noise_sd < 0.0) fail("noise scales must be non-negative");
  auto share = [&](double s, const char* name) {
    if (s < 0.0 || s > 1.0) fail(fmt::format("{} must lie in [0, 1]", name));
  };
  share(passengers.abandon_prone_share, "abandon_prone_share");
  share(passengers.deterrence_share, "deterrence_share");
  share(events.concert_probability, "concert_probability");
  share(events.sports_probability, "sports_probability");
  share(events.exhibition_probability, "exhibition_probability");
  share(weather.rain_day_probability, "rain_day_probability");
  if (passengers.egress_min > passengers.egress_max || passengers.egress_min.count() < 0) fail("bad egress range");
  if (passengers.patience_min_minutes <= 0.0 || passengers.patience_mean_extra_minutes < 0.0) fail("bad patience");
  if (weather.temperature_min_c > weather.temperature_max_c || weather.wind_min_kmh > weather.wind_max_kmh)
    fail("bad weather bounds");
  if (disruption) {
    if (!topology.find_station(disruption->station)) fail(fmt::format("unknown station '{}'", disruption->station));
    if (disruption->duration < Seconds{300}) fail("disruption must last at least 5 minutes");
    const auto cal = calendar_days();
    if (std::find(cal.begin(), cal.end(), disruption->day) == cal.end())
      fail(fmt::format("disruption day {} is not a simulated weekday", format_date(disruption->day)));
    if (disruption->start < topology.grid.service_start || disruption->start + disruption->duration > topology.grid.service_end)
      fail("disruption must lie within service hours");
  }
}

namespace {

Topology default_topology() {
  Topology topo;
  const std::vector<std::tuple<const char*, const char*, double, double>> stations{
      {"S01", "Harbour End", 22.2646, 114.2370},  {"S02", "Bay Road", 22.2731, 114.2290},
      {"S03", "Market Street", 22.2790, 114.2190}, {"S04", "Central Cross", 22.2830, 114.2080},
      {"S05", "Old Town", 22.2850, 114.1950},     {"S06", "West Quay", 22.2870, 114.1820},
      {"S07", "North Hill", 22.3150, 114.2250},    {"S08", "Garden Park", 22.3010, 114.2160},
      {"S09", "Ferry Point", 22.2700, 114.1990},   {"S10", "South Cape", 22.2560, 114.1930},
  };
  for (const auto& [id, name, lat, lon] : stations) topo.stations.push_back({id, name, lat, lon, {}});

  const std::vector<HeadwayPeriod> periods{
      {parse_clock("06:00"), parse_clock("07:30"), 300}, {parse_clock("07:30"), parse_clock("09:30"), 180},
      {parse_clock("09:30"), parse_clock("17:00"), 300}, {parse_clock("17:00"), parse_clock("19:30"), 180},
      {parse_clock("19:30"), parse_clock("22:00"), 300}, {parse_clock("22:00"), parse_clock("24:00"), 480},
  };
  Line l1{"L1", {0, 1, 2, 3, 4, 5}, 50, 40.0, 300.0, periods};
  Line l2{"L2", {6, 7, 3, 8, 9}, 50, 40.0, 300.0, periods};
  topo.lines = {l1, l2};
  const std::vector<double> l1_km{1.2, 1.0, 1.5, 1.1, 1.3};
  for (std::size_t i = 0; i + 1 < l1.stations.size(); ++i)
    topo.edges.push_back({l1.stations[i], l1.stations[i + 1], 0, l1_km[i]});
  const std::vector<double> l2_km{1.4, 1.2, 1.0, 1.6};
  for (std::size_t i = 0; i + 1 < l2.stations.size(); ++i)
    topo.edges.push_back({l2.stations[i], l2.stations[i + 1], 1, l2_km[i]});
  topo.finalize();
  return topo;
}

}  // namespace

SimSpec default_spec() {
  SimSpec spec;
  spec.topology = default_topology();
  spec.first_day = parse_date("2019-02-25");
  spec.days = 14;
  spec.demand.station_weight = {1.3, 0.8, 1.0, 1.6, 1.2, 1.4, 0.9, 0.8, 0.7, 0.6};
  spec.demand.hourly_profile = {0.35, 0.9, 1.6, 1.2, 0.75, 0.7, 0.8, 0.8, 0.7,
                                0.75, 0.95, 1.45, 1.6, 1.1, 0.8, 0.65, 0.5, 0.25};
  spec.disruption = InjectionSpec{"S01", parse_date("2019-03-11"), parse_clock("17:41"), Seconds{27 * 60}};
  return spec;
}

namespace {

double seconds_of(const json& j, const char* key, Seconds fallback) {
  return j.value(key, static_cast<double>(fallback.count()));
}

Seconds clock_of(const json& j, const char* key, Seconds fallback) {
  if (!j.contains(key)) return fallback;
  return parse_clock(j.at(key).get<std::string>());
}

}  // namespace

SimSpec parse_sim_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(fmt::format("simulation spec: {}", e.what()));
  }
  SimSpec spec = default_spec();
  try {
    if (!doc.is_object()) throw InputError("simulation spec: top level must be an object");
    spec.seed = doc.value("seed", spec.seed);
    if (doc.contains("topology")) spec.topology = parse_topology_json(doc.at("topology").dump());
    if (doc.contains("first_day")) spec.first_day = parse_date(doc.at("first_day").get<std::string>());
    spec.days = doc.value("days", spec.days);
    if (doc.contains("holidays")) {
      spec.holidays.clear();
      for (const auto& h : doc.at("holidays")) spec.holidays.push_back(parse_date(h.get<std::string>()));
    }
    if (doc.contains("timetable")) {
      const auto& t = doc.at("timetable");
      auto& tt = spec.timetable;
      tt.first_departure = clock_of(t, "first_departure", tt.first_departure);
      tt.last_departure = clock_of(t, "last_departure", tt.last_departure);
      tt.speed_kmh = t.value("speed_kmh", tt.speed_kmh);
      tt.dwell = Seconds{static_cast<long>(seconds_of(t, "dwell_s", tt.dwell))};
      tt.min_separation = Seconds{static_cast<long>(seconds_of(t, "min_separation_s", tt.min_separation))};
      tt.rain_slowdown = t.value("rain_slowdown", tt.rain_slowdown);
      tt.wind_slowdown = t.value("wind_slowdown", tt.wind_slowdown);
    }
    if (doc.contains("demand")) {
      const auto& d = doc.at("demand");
      auto& dm = spec.demand;
      dm.base_per_interval = d.value("base_per_interval", dm.base_per_interval);
      if (d.contains("station_weight")) dm.station_weight = d.at("station_weight").get<std::vector<double>>();
      else if (doc.contains("topology")) dm.station_weight.clear();
      dm.distance_decay_hops = d.value("distance_decay_hops", dm.distance_decay_hops);
      if (d.contains("hourly_profile")) dm.hourly_profile = d.at("hourly_profile").get<std::vector<double>>();
      if (d.contains("weekday_factor")) {
        const auto f = d.at("weekday_factor").get<std::vector<double>>();
        if (f.size() != 5) throw InputError("simulation spec: weekday_factor needs 5 entries");
        std::copy(f.begin(), f.end(), dm.weekday_factor.begin());
      }
      dm.temperature_ref_c = d.value("temperature_ref_c", dm.temperature_ref_c);
      dm.temperature_coef = d.value("temperature_coef", dm.temperature_coef);
      dm.wind_coef = d.value("wind_coef", dm.wind_coef);
      dm.rain_coef = d.value("rain_coef", dm.rain_coef);
      dm.concert_coef = d.value("concert_coef", dm.concert_coef);
      dm.sports_coef = d.value("sports_coef", dm.sports_coef);
      dm.exhibition_coef = d.value("exhibition_coef", dm.exhibition_coef);
      dm.day_noise_sd = d.value("day_noise_sd", dm.day_noise_sd);
      dm.station_noise_sd = d.value("station_noise_sd", dm.station_noise_sd);
    } else if (doc.contains("topology")) {
      spec.demand.station_weight.clear();
    }
    if (doc.contains("weather")) {
      const auto& w = doc.at("weather");
      auto& ws = spec.weather;
      ws.temperature_mean_c = w.value("temperature_mean_c", ws.temperature_mean_c);
      ws.temperature_sd_c = w.value("temperature_sd_c", ws.temperature_sd_c);
      ws.temperature_min_c = w.value("temperature_min_c", ws.temperature_min_c);
      ws.temperature_max_c = w.value("temperature_max_c", ws.temperature_max_c);
      ws.diurnal_amplitude_c = w.value("diurnal_amplitude_c", ws.diurnal_amplitude_c);
      ws.wind_mean_kmh = w.value("wind_mean_kmh", ws.wind_mean_kmh);
      ws.wind_sd_kmh = w.value("wind_sd_kmh", ws.wind_sd_kmh);
      ws.wind_min_kmh = w.value("wind_min_kmh", ws.wind_min_kmh);
      ws.wind_max_kmh = w.value("wind_max_kmh", ws.wind_max_kmh);
      ws.rain_day_probability = w.value("rain_day_probability", ws.rain_day_probability);
      ws.rain_max_mmh = w.value("rain_max_mmh", ws.rain_max_mmh);
    }
    if (doc.contains("events")) {
      const auto& e = doc.at("events");
      spec.events.concert_probability = e.value("concert_probability", spec.events.concert_probability);
      spec.events.sports_probability = e.value("sports_probability", spec.events.sports_probability);
      spec.events.exhibition_probability = e.value("exhibition_probability", spec.events.exhibition_probability);
    }
    if (doc.contains("passengers")) {
      const auto& p = doc.at("passengers");
      auto& ps = spec.passengers;
      ps.egress_min = Seconds{static_cast<long>(seconds_of(p, "egress_min_s", ps.egress_min))};
      ps.egress_max = Seconds{static_cast<long>(seconds_of(p, "egress_max_s", ps.egress_max))};
      ps.patience_min_minutes = p.value("patience_min_minutes", ps.patience_min_minutes);
      ps.patience_mean_extra_minutes = p.value("patience_mean_extra_minutes", ps.patience_mean_extra_minutes);
      ps.abandon_prone_share = p.value("abandon_prone_share", ps.abandon_prone_share);
      ps.deterrence_share = p.value("deterrence_share", ps.deterrence_share);
    }
    if (doc.contains("disruption")) {
      const auto& d = doc.at("disruption");
      if (d.is_null()) {
        spec.disruption.reset();
      } else {
        InjectionSpec inj;
        inj.station = d.at("station").get<std::string>();
        inj.day = parse_date(d.at("day").get<std::string>());
        inj.start = parse_clock(d.at("start").get<std::string>());
        inj.duration = Seconds{static_cast<long>(std::llround(d.at("duration_min").get<double>() * 60.0))};
        inj.cause = d.value("cause", inj.cause);
        spec.disruption = inj;
      }
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("simulation spec: {}", e.what()));
  } catch (const TimeParseError& e) {
    throw InputError(fmt::format("simulation spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

SimSpec read_sim_spec(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(fmt::format("cannot open simulation spec '{}'", path.string()));
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_sim_spec(buf.str());
}

std::string sim_spec_to_json(const SimSpec& spec) {
  json doc;
  doc["seed"] = spec.seed;
  doc["topology"] = json::parse(topology_to_json(spec.topology));
  doc["first_day"] = format_date(spec.first_day);
  doc["days"] = spec.days;
  doc["holidays"] = json::array();
  for (auto h : spec.holidays) doc["holidays"].push_back(format_date(h));
  const auto& tt = spec.timetable;
  doc["timetable"] = {{"first_departure", format_clock(tt.first_departure)},
                      {"last_departure", format_clock(tt.last_departure)},
                      {"speed_kmh", tt.speed_kmh},
                      {"dwell_s", tt.dwell.count()},
                      {"min_separation_s", tt.min_separation.count()},
                      {"rain_slowdown", tt.rain_slowdown},
                      {"wind_slowdown", tt.wind_slowdown}};
  const auto& dm = spec.demand;
  doc["demand"] = {{"base_per_interval", dm.base_per_interval},
                   {"station_weight", dm.station_weight},
                   {"distance_decay_hops", dm.distance_decay_hops},
                   {"hourly_profile", dm.hourly_profile},
                   {"weekday_factor", std::vector<double>(dm.weekday_factor.begin(), dm.weekday_factor.end())},
                   {"temperature_ref_c", dm.temperature_ref_c},
                   {"temperature_coef", dm.temperature_coef},
                   {"wind_coef", dm.wind_coef},
                   {"rain_coef", dm.rain_coef},
                   {"concert_coef", dm.concert_coef},
                   {"sports_coef", dm.sports_coef},
                   {"exhibition_coef", dm.exhibition_coef},
                   {"day_noise_sd", dm.day_noise_sd},
                   {"station_noise_sd", dm.station_noise_sd}};
  const auto& ws = spec.weather;
  doc["weather"] = {{"temperature_mean_c", ws.temperature_mean_c}, {"temperature_sd_c", ws.temperature_sd_c},
                    {"temperature_min_c", ws.temperature_min_c},   {"temperature_max_c", ws.temperature_max_c},
                    {"diurnal_amplitude_c", ws.diurnal_amplitude_c}, {"wind_mean_kmh", ws.wind_mean_kmh},
                    {"wind_sd_kmh", ws.wind_sd_kmh},               {"wind_min_kmh", ws.wind_min_kmh},
                    {"wind_max_kmh", ws.wind_max_kmh},             {"rain_day_probability", ws.rain_day_probability},
                    {"rain_max_mmh", ws.rain_max_mmh}};
  doc["events"] = {{"concert_probability", spec.events.concert_probability},
                   {"sports_probability", spec.events.sports_probability},
                   {"exhibition_probability", spec.events.exhibition_probability}};
  const auto& ps = spec.passengers;
  doc["passengers"] = {{"egress_min_s", ps.egress_min.count()},
                       {"egress_max_s", ps.egress_max.count()},
                       {"patience_min_minutes", ps.patience_min_minutes},
                       {"patience_mean_extra_minutes", ps.patience_mean_extra_minutes},
                       {"abandon_prone_share", ps.abandon_prone_share},
                       {"deterrence_share", ps.deterrence_share}};
  if (spec.disruption) {
    const auto& d = *spec.disruption;
    doc["disruption"] = {{"station", d.station},
                         {"day", format_date(d.day)},
                         {"start", format_clock(d.start)},
                         {"duration_min", static_cast<double>(d.duration.count()) / 60.0},
                         {"cause", d.cause}};
  } else {
    doc["disruption"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

// ------------------------------------------------------------ one day

namespace {

struct Covariates {
  std::vector<WeatherRecord> weather;  // one per service hour
  std::vector<EventRecord> events;
  double day_factor = 1.0;
  std::vector<double> station_factor;
};

Covariates draw_covariates(const SimSpec& spec, Day day) {
  auto rng = stream(spec.seed, day, kCovariateStream, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& ws = spec.weather;
  Covariates cov;

  const double temp_day =
      std::clamp(ws.temperature_mean_c + ws.temperature_sd_c * normal(rng), ws.temperature_min_c, ws.temperature_max_c);
  const double wind_day = std::clamp(ws.wind_mean_kmh + ws.wind_sd_kmh * normal(rng), ws.wind_min_kmh, ws.wind_max_kmh);
  const bool rainy = unit(rng) < ws.rain_day_probability;
  const double rain_day = 0.5 + unit(rng) * std::max(0.0, ws.rain_max_mmh - 0.5);
  const auto& grid = spec.topology.grid;
  for (auto h = grid.service_start; h < grid.service_end; h += Seconds{3600}) {
    const double hour = static_cast<double>(h.count()) / 3600.0;
    WeatherRecord r;
    r.hour = Timestamp{day} + h;
    const double diurnal = ws.diurnal_amplitude_c * std::cos((hour - 14.0) / 24.0 * 2.0 * M_PI);
    r.sample.temperature_c = std::clamp(temp_day + diurnal + 0.2 * normal(rng), ws.temperature_min_c, ws.temperature_max_c);
    r.sample.wind_kmh = std::clamp(wind_day + 1.0 * normal(rng), ws.wind_min_kmh, ws.wind_max_kmh);
    const double hour_factor = 0.9 + 0.2 * unit(rng);
    r.sample.rain_mmh = rainy ? std::round(rain_day * hour_factor * 10.0) / 10.0 : 0.0;
    r.sample.temperature_c = std::round(r.sample.temperature_c * 10.0) / 10.0;
    r.sample.wind_kmh = std::round(r.sample.wind_kmh * 10.0) / 10.0;
    cov.weather.push_back(r);
  }
  if (unit(rng) < spec.events.concert_probability) cov.events.push_back({day, EventKind::concert});
  if (unit(rng) < spec.events.sports_probability) cov.events.push_back({day, EventKind::sports});
  if (unit(rng) < spec.events.exhibition_probability) cov.events.push_back({day, EventKind::exhibition});

  const auto& dm = spec.demand;
  cov.day_factor = std::exp(dm.day_noise_sd * normal(rng) - 0.5 * dm.day_noise_sd * dm.day_noise_sd);
  for (std::size_t s = 0; s < spec.topology.station_count(); ++s)
    cov.station_factor.push_back(
        std::exp(dm.station_noise_sd * normal(rng) - 0.5 * dm.station_noise_sd * dm.station_noise_sd));
  return cov;
}

double profile_at(const std::vector<double>& hourly, const ServiceGrid& grid, double hours_since_start) {
  if (hourly.empty()) return 1.0;
  (void)grid;
  // Values sit at hour midpoints; linear in between, flat beyond the ends.
  const double x = hours_since_start - 0.5;
  if (x <= 0.0) return hourly.front();
  const auto last = static_cast<double>(hourly.size() - 1);
  if (x >= last) return hourly.back();
  const auto i = static_cast<std::size_t>(std::floor(x));
  const double f = x - static_cast<double>(i);
  return hourly[i] * (1.0 - f) + hourly[i + 1] * f;
}

struct Halt {
  bool active = false;
  StationIndex station = 0;
  Timestamp start{};
  Timestamp end{};

  bool blocks(StationIndex s, Timestamp t) const { return active && s == station && t >= start && t < end; }
};

double edge_km(const Topology& topo, LineIndex line, StationIndex a, StationIndex b) {
  for (const auto& e : topo.edges)
    if (e.line == line && ((e.from == a && e.to == b) || (e.from == b && e.to == a))) return e.km;
  throw InputError(fmt::format("line {} has no track between {} and {}", topo.lines[line].id, topo.stations[a].id,
                               topo.stations[b].id));
}

std::vector<AvlRecord> run_timetable(const SimSpec& spec, Day day, const Halt& halt,
                                     const std::vector<WeatherRecord>& weather) {
  const auto& topo = spec.topology;
  const auto& tt = spec.timetable;
  std::vector<AvlRecord> avl;
  const std::string date = format_date(day);
  for (LineIndex l = 0; l < topo.lines.size(); ++l) {
    const auto& line = topo.lines[l];
    for (auto dir : {Direction::up, Direction::down}) {
      std::vector<StationIndex> stops = line.stations;
      if (dir == Direction::down) std::reverse(stops.begin(), stops.end());
      const auto n = stops.size();
      std::vector<double> base_run(n > 0 ? n - 1 : 0);
      for (std::size_t i = 0; i + 1 < n; ++i) base_run[i] = edge_km(topo, l, stops[i], stops[i + 1]) / tt.speed_kmh * 3600.0;

      std::vector<Timestamp> origin_departures;
      for (Seconds t = tt.first_departure; t <= tt.last_departure;) {
        origin_departures.push_back(Timestamp{day} + t);
        const auto h = line.headway_at(t);
        if (!h || *h <= 0.0)
          throw InputError(fmt::format("infeasible timetable: line {} has no headway at {}", line.id, format_clock(t)));
        t += Seconds{std::llround(*h)};
      }

      std::vector<std::optional<Timestamp>> prev_arr, prev_dep;
      for (std::size_t k = 0; k < origin_departures.size(); ++k) {
        std::vector<std::optional<Timestamp>> arr(n), dep(n);
        const auto hour = static_cast<std::size_t>(
            std::max<long>(0, (time_of_day(origin_departures[k]) - topo.grid.service_start).count() / 3600));
        double slowdown = 1.0;
        if (!weather.empty()) {
          const auto& w = weather[std::min(hour, weather.size() - 1)].sample;
          slowdown += tt.rain_slowdown * w.rain_mmh + tt.wind_slowdown * w.wind_kmh;
        }
        std::vector<Seconds> run(base_run.size());
        for (std::size_t i = 0; i < run.size(); ++i) run[i] = Seconds{std::llround(base_run[i] * slowdown)};
        auto platform_free = [&](std::size_t i) -> std::optional<Timestamp> {
          if (prev_dep.empty()) return std::nullopt;
          if (prev_dep[i]) return *prev_dep[i];
          if (prev_arr[i]) return *prev_arr[i] + tt.dwell;
          return std::nullopt;
        };
        Timestamp d0 = origin_departures[k];
        if (!prev_dep.empty() && prev_dep[0]) d0 = std::max(d0, *prev_dep[0] + tt.min_separation);
        if (halt.blocks(stops[0], d0)) d0 = halt.end;
        dep[0] = d0;
        for (std::size_t i = 1; i < n; ++i) {
          Timestamp a = *dep[i - 1] + run[i - 1];
          Timestamp required = a;
          if (auto free = platform_free(i)) required = std::max(required, *free + tt.dwell);
          if (halt.blocks(stops[i], required)) required = halt.end;
          if (required > a) {
            if (halt.active && *dep[i - 1] >= halt.start) {
              // Hold at the previous platform.
              Timestamp held = required - run[i - 1];
              if (halt.blocks(stops[i - 1], held)) held = halt.end;
              dep[i - 1] = held;
              a = std::max(required, held + run[i - 1]);
            } else {
              a = required;  // waits in the section
            }
          }
          arr[i] = a;
          if (i + 1 < n) {
            Timestamp d = a + tt.dwell;
            if (!prev_dep.empty() && prev_dep[i]) d = std::max(d, *prev_dep[i] + tt.min_separation);
            if (halt.blocks(stops[i], d)) d = halt.end;
            dep[i] = d;
          }
        }
        const std::string train = fmt::format("{}{}{:03d}", line.id, dir == Direction::up ? 'U' : 'D', k + 1);
        const std::string service = fmt::format("{}-{}", date, train);
        for (std::size_t i = 0; i < n; ++i) {
          if (i > 0) avl.push_back({train, service, stops[i], l, dir, AvlEvent::arrival, *arr[i]});
          if (i + 1 < n) avl.push_back({train, service, stops[i], l, dir, AvlEvent::departure, *dep[i]});
        }
        prev_arr = std::move(arr);
        prev_dep = std::move(dep);
      }
    }
  }
  return avl;
}

struct Passenger {
  StationIndex origin;
  StationIndex dest;
  Timestamp arrival;
  Seconds egress;
  double patience_s;
  bool prone;
  double deter_draw;
  std::string card;
};

std::vector<Passenger> draw_passengers(const SimSpec& spec, Day day, const Covariates& cov,
                                       const NetworkGraph& graph) {
  const auto& topo = spec.topology;
  const auto& dm = spec.demand;
  const auto& ps = spec.passengers;
  const auto& grid = topo.grid;
  const auto A = topo.station_count();
  auto weight = [&](StationIndex s) { return dm.station_weight.empty() ? 1.0 : dm.station_weight[s]; };

  double event_factor = 1.0;
  for (const auto& e : cov.events)
    event_factor += e.kind == EventKind::concert ? dm.concert_coef
                    : e.kind == EventKind::sports ? dm.sports_coef
                                                  : dm.exhibition_coef;
  const double weekday = dm.weekday_factor[static_cast<std::size_t>(weekday_index(day))];

  std::vector<Passenger> out;
  std::string date = format_date(day);
  date.erase(std::remove(date.begin(), date.end(), '-'), date.end());
  for (StationIndex o = 0; o < A; ++o) {
    auto rng = stream(spec.seed, day, kPassengerStream, o);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<long> within(0, grid.interval_length.count() - 1);
    std::uniform_int_distribution<long> egress(ps.egress_min.count(), ps.egress_max.count());
    std::exponential_distribution<double> extra(ps.patience_mean_extra_minutes > 0.0
                                                    ? 1.0 / ps.patience_mean_extra_minutes
                                                    : 1e12);
    std::vector<double> share(A, 0.0);
    double total = 0.0;
    for (StationIndex d = 0; d < A; ++d) {
      if (d == o || !graph.reachable(o, d)) continue;
      share[d] = weight(d) * std::exp(-graph.hop_distance(o, d) / dm.distance_decay_hops);
      total += share[d];
    }
    if (total <= 0.0) continue;
    std::size_t seq = 0;
    for (int t = 0; t < grid.count(); ++t) {
      const Timestamp begin = grid.interval_begin(day, t);
      if (time_of_day(begin) > spec.timetable.last_departure) continue;
      const double hours = static_cast<double>((grid.service_start + t * grid.interval_length + grid.interval_length / 2 -
                                                grid.service_start)
                                                   .count()) /
                           3600.0;
      const auto w = cov.weather[std::min<std::size_t>(static_cast<std::size_t>(t * grid.interval_length.count() / 3600),
                                                       cov.weather.size() - 1)]
                         .sample;
      const double covariate = std::max(0.0, 1.0 + dm.temperature_coef * (w.temperature_c - dm.temperature_ref_c) +
                                                 dm.wind_coef * w.wind_kmh + dm.rain_coef * w.rain_mmh);
      const double production = dm.base_per_interval * weight(o) * profile_at(dm.hourly_profile, grid, hours) *
                                weekday * covariate * event_factor * cov.day_factor * cov.station_factor[o];
      // Origin total by stochastic rounding, destinations by systematic sampling
      // over the cumulative shares, so each OD count stays within one of its mean.
      const double whole = std::floor(production);
      const int count = static_cast<int>(whole) + (unit(rng) < production - whole ? 1 : 0);
      const double offset = unit(rng);
      StationIndex d = 0;
      double cumulative = share[0] / total;
      for (int c = 0; c < count; ++c) {
        const double x = (offset + c) / count;
        while (d + 1 < A && (x >= cumulative || share[d] <= 0.0)) cumulative += share[++d] / total;
        while (share[d] <= 0.0) --d;  // rounding at the top end
        Passenger p;
        p.origin = o;
        p.dest = d;
        p.arrival = begin + Seconds{within(rng)};
        p.egress = Seconds{egress(rng)};
        p.patience_s = 60.0 * (ps.patience_min_minutes + extra(rng));
        p.prone = unit(rng) < ps.abandon_prone_share;
        p.deter_draw = unit(rng);
        p.card = fmt::format("{}{:02d}{:06d}", date, o, seq++);
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

}  // namespace

DaySimulation simulate_day(const SimSpec& spec, Day day, bool with_disruption) {
  const auto& topo = spec.topology;
  const NetworkGraph graph(topo);
  const auto cov = draw_covariates(spec, day);

  Halt halt;
  if (with_disruption && spec.disruption && spec.disruption->day == day) {
    halt.active = true;
    halt.station = *topo.find_station(spec.disruption->station);
    halt.start = spec.disruption->start_time();
    halt.end = spec.disruption->end_time();
  }

  DaySimulation sim;
  sim.day = day;
  sim.disrupted = halt.active;
  sim.weather = cov.weather;
  sim.events = cov.events;
  sim.avl = run_timetable(spec, day, halt, cov.weather);

  const auto runs = build_runs(sim.avl, topo);
  const TrainIndex index(runs, topo);
  std::vector<std::vector<int>> boardings(runs.size()), alightings(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    boardings[r].assign(runs[r].stops.size(), 0);
    alightings[r].assign(runs[r].stops.size(), 0);
  }

  const auto passengers = draw_passengers(spec, day, cov, graph);
  sim.generated = passengers.size();
  const AssignmentConfig assignment{};
  for (const auto& p : passengers) {
    if (halt.blocks(p.origin, p.arrival) && p.deter_draw < spec.passengers.deterrence_share) {
      ++sim.deterred;
      continue;
    }
    const auto plan = plan_journey(graph.route(p.origin, p.dest), index, p.arrival, assignment);
    if (!plan) continue;
    const double wait = static_cast<double>((plan->front().departure - p.arrival).count());
    if (p.prone && wait > p.patience_s) {
      const auto patience = Seconds{static_cast<long>(std::llround(p.patience_s))};
      sim.abandonments.push_back({p.card, p.origin, p.dest, p.arrival, p.arrival + patience});
      continue;
    }
    for (const auto& b : *plan) {
      ++boardings[b.run][b.board_stop];
      ++alightings[b.run][b.alight_stop];
    }
    sim.trips.push_back({p.card, p.origin, p.dest, p.arrival, plan->back().arrival + p.egress});
  }

  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    const auto& line = topo.lines[run.line];
    int on_board = 0;
    for (std::size_t s = 0; s < run.stops.size(); ++s) {
      on_board += boardings[r][s] - alightings[r][s];
      sim.manifest.push_back({run.train_id, run.service_id, run.line, run.direction, s, run.stops[s].station,
                              run.stops[s].arrival, run.stops[s].departure, boardings[r][s], alightings[r][s],
                              on_board, line.seats_per_train, line.floor_area_m2});
    }
  }
  return sim;
}

// ------------------------------------------------------------ ground truth

namespace {

Dataset day_dataset(const SimSpec& spec, const DaySimulation& sim) {
  Dataset ds;
  ds.topology = spec.topology;
  ds.trips = sim.trips;
  ds.abandonments = sim.abandonments;
  ds.avl = sim.avl;
  ds.weather = WeatherTable(sim.weather);
  ds.events = sim.events;
  ds.calendar = {{sim.day, false, true}};
  canonicalize(ds);
  return ds;
}

DisruptionRecord injected_record(const SimSpec& spec) {
  const auto& inj = *spec.disruption;
  const auto& topo = spec.topology;
  DisruptionRecord r;
  r.station = *topo.find_station(inj.station);
  r.line = topo.stations[r.station].lines.front();
  r.day = inj.day;
  r.start = inj.start_time();
  r.end = inj.end_time();
  r.start_interval = treatment_start_interval(r.start, r.end, topo.grid);
  r.source = DisruptionSource::incident_log;
  r.cause = inj.cause;
  return r;
}

GroundTruth truth_from(const SimSpec& spec, const DaySimulation& disrupted, const DaySimulation& undisrupted) {
  GroundTruth gt;
  gt.day = disrupted.day;
  gt.injected = disrupted.disrupted;
  if (spec.disruption) {
    gt.record = injected_record(spec);
    gt.treatment_start = *gt.record.start_interval;
  }
  const NetworkGraph graph(spec.topology);
  gt.disrupted = build_panel(day_dataset(spec, disrupted), graph);
  gt.undisrupted = build_panel(day_dataset(spec, undisrupted), graph);
  return gt;
}

}  // namespace

double GroundTruth::effect(Outcome outcome, StationIndex station, int interval) const {
  return disrupted.at(outcome, station, 0, interval) - undisrupted.at(outcome, station, 0, interval);
}

GroundTruth ground_truth(const SimSpec& spec) {
  spec.validate();
  const Day day = spec.disruption ? spec.disruption->day : spec.calendar_days().front();
  return truth_from(spec, simulate_day(spec, day, true), simulate_day(spec, day, false));
}

SimulationResult simulate(const SimSpec& spec, unsigned workers) {
  spec.validate();
  const auto days = spec.calendar_days();
  std::vector<DaySimulation> sims(days.size());
  parallel_for(days.size(), workers, [&](std::size_t i) { sims[i] = simulate_day(spec, days[i], true); });

  SimulationResult out;
  auto& ds = out.dataset;
  ds.topology = spec.topology;
  std::vector<WeatherRecord> weather;
  for (const auto& s : sims) {
    ds.trips.insert(ds.trips.end(), s.trips.begin(), s.trips.end());
    ds.abandonments.insert(ds.abandonments.end(), s.abandonments.begin(), s.abandonments.end());
    ds.avl.insert(ds.avl.end(), s.avl.begin(), s.avl.end());
    ds.events.insert(ds.events.end(), s.events.begin(), s.events.end());
    weather.insert(weather.end(), s.weather.begin(), s.weather.end());
    out.manifests.insert(out.manifests.end(), s.manifest.begin(), s.manifest.end());
    const bool holiday = std::find(spec.holidays.begin(), spec.holidays.end(), s.day) != spec.holidays.end();
    ds.calendar.push_back({s.day, holiday, true});
  }
  ds.weather = WeatherTable(std::move(weather));
  if (spec.disruption) {
    const auto r = injected_record(spec);
    ds.incidents.push_back({r.start, r.end, r.station, r.line, r.cause, IncidentType::primary});
  }
  canonicalize(ds);

  const Day truth_day = spec.disruption ? spec.disruption->day : days.front();
  const auto idx = static_cast<std::size_t>(std::find(days.begin(), days.end(), truth_day) - days.begin());
  out.truth = truth_from(spec, sims[idx], simulate_day(spec, truth_day, false));
  return out;
}

void write_simulation(const fs::path& dir, const SimulationResult& result) {
  write_dataset(dir, result.dataset);
  const auto& topo = result.dataset.topology;
  const auto& gt = result.truth;

  {
    csv::Writer w(dir / "ground_truth.csv",
                  {"station", "day", "interval", "outcome", "undisrupted", "disrupted", "effect"});
    for (StationIndex a = 0; a < topo.station_count(); ++a)
      for (auto m : kOutcomes)
        for (int t = 0; t < gt.disrupted.interval_count(); ++t)
          w.row({topo.stations[a].id, format_date(gt.day), std::to_string(t), std::string(outcome_name(m)),
                 csv::format_double(gt.undisrupted.at(m, a, 0, t), 6), csv::format_double(gt.disrupted.at(m, a, 0, t), 6),
                 csv::format_double(gt.effect(m, a, t), 6)});
    w.close();
  }
  {
    csv::Writer w(dir / "injection_log.csv", {"station", "line", "day", "start", "end", "duration_min", "T_IS"});
    if (gt.injected) {
      const auto& r = gt.record;
      w.row({topo.stations[r.station].id, topo.lines[r.line].id, format_date(r.day), format_timestamp(r.start),
             format_timestamp(r.end), csv::format_double(r.duration_min(), 2), std::to_string(gt.treatment_start)});
    }
    w.close();
  }
  {
    auto ts = [](const std::optional<Timestamp>& t) { return t ? format_timestamp(*t) : std::string{}; };
    csv::Writer w(dir / "manifests.csv", {"train_id", "service_id", "line", "direction", "stop", "station", "arrival",
                                          "departure", "boardings", "alightings", "on_board", "seats",
                                          "floor_area_m2"});
    for (const auto& m : result.manifests)
      w.row({m.train_id, m.service_id, topo.lines[m.line].id, std::string(to_string(m.direction)),
             std::to_string(m.stop), topo.stations[m.station].id, ts(m.arrival), ts(m.departure),
             std::to_string(m.boardings), std::to_string(m.alightings), std::to_string(m.on_board),
             std::to_string(m.seats), csv::format_double(m.floor_area_m2, 2)});
    w.close();
  }
}

}  // namespace metroscm
