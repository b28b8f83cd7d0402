#include "metroscm/detect.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "metroscm/csv.hpp"
#include "metroscm/network.hpp"

namespace metroscm {

std::string_view to_string(DisruptionSource s) {
  switch (s) {
    case DisruptionSource::incident_log: return "incident_log";
    case DisruptionSource::avl_detected: return "avl_detected";
    case DisruptionSource::merged: return "merged";
  }
  return "merged";
}

namespace {

struct Gap {
  StationIndex station;
  Direction direction;
  Timestamp start;
  Timestamp end;
};

Seconds overlap(Timestamp a0, Timestamp a1, Timestamp b0, Timestamp b1) {
  return std::max(Seconds{0}, std::min(a1, b1) - std::max(a0, b0));
}

std::optional<int> start_interval_or_none(Timestamp start, Timestamp end, const ServiceGrid& grid) {
  try {
    return treatment_start_interval(start, end, grid);
  } catch (const InputError&) {
    return std::nullopt;
  }
}

}  // namespace

int treatment_start_interval(Timestamp start, Timestamp end, const ServiceGrid& grid, Seconds min_overlap) {
  const Day day = day_of(start);
  const Timestamp s = std::max(start, grid.interval_begin(day, 0));
  const Timestamp e = std::min(end, grid.interval_begin(day, grid.count()));
  if (e > s) {
    const int first = static_cast<int>((s - grid.interval_begin(day, 0)) / grid.interval_length);
    for (int t = first; t <= first + 1 && t < grid.count(); ++t)
      if (overlap(s, e, grid.interval_begin(day, t), grid.interval_end(day, t)) >= min_overlap) return t;
  }
  throw InputError(fmt::format("no interval overlaps {} - {} by {} s", format_timestamp(start),
                               format_timestamp(end), min_overlap.count()));
}

int treatment_end_interval(Timestamp start, Timestamp end, const ServiceGrid& grid, Seconds min_overlap) {
  const Day day = day_of(start);
  const Timestamp s = std::max(start, grid.interval_begin(day, 0));
  const Timestamp e = std::min(end, grid.interval_begin(day, grid.count()));
  if (e > s) {
    const int last = static_cast<int>((e - Seconds{1} - grid.interval_begin(day, 0)) / grid.interval_length);
    for (int t = last; t >= last - 1 && t >= 0; --t)
      if (overlap(s, e, grid.interval_begin(day, t), grid.interval_end(day, t)) >= min_overlap) return t;
  }
  throw InputError(fmt::format("no interval overlaps {} - {} by {} s", format_timestamp(start),
                               format_timestamp(end), min_overlap.count()));
}

std::vector<DisruptionRecord> detect_from_avl(const std::vector<AvlRecord>& avl, const Topology& topo,
                                              const DetectConfig& config) {
  // Passage time of every run at every station: departure, or arrival at the last stop.
  std::map<std::tuple<LineIndex, Direction, StationIndex>, std::vector<Timestamp>> passages;
  for (const auto& run : build_runs(avl, topo))
    for (const auto& stop : run.stops)
      passages[{run.line, run.direction, stop.station}].push_back(stop.departure ? *stop.departure : *stop.arrival);

  std::map<LineIndex, std::vector<Gap>> gaps;
  for (auto& [key, times] : passages) {
    const auto [line_index, direction, station] = key;
    const auto& line = topo.lines[line_index];
    std::sort(times.begin(), times.end());
    for (std::size_t i = 1; i < times.size(); ++i) {
      const auto prev = times[i - 1];
      const auto next = times[i];
      if (day_of(prev) != day_of(next)) continue;
      const auto gap = next - prev;
      if (gap < config.min_duration) continue;
      const auto headway = line.headway_at(time_of_day(prev));
      if (!headway)
        throw InputError(fmt::format("line {} has no scheduled headway at {}", line.id,
                                     format_clock(time_of_day(prev))));
      if (static_cast<double>(gap.count()) > config.headway_multiplier * *headway)
        gaps[line_index].push_back({station, direction, prev, next});
    }
  }

  std::vector<DisruptionRecord> out;
  for (auto& [line_index, candidates] : gaps) {
    const auto& line = topo.lines[line_index];
    // Narrow each gap to the time both directions were without service.
    std::vector<Gap> spans;
    for (const auto& g : candidates) {
      const Gap* partner = nullptr;
      Seconds best{0};
      for (const auto& h : candidates) {
        if (h.station != g.station || h.direction == g.direction) continue;
        const auto ov = overlap(g.start, g.end, h.start, h.end);
        if (ov > best) {
          best = ov;
          partner = &h;
        }
      }
      Gap span = g;
      if (partner) {
        span.start = std::max(g.start, partner->start);
        span.end = std::min(g.end, partner->end);
      }
      if (span.end - span.start >= config.min_duration) spans.push_back(span);
    }
    std::sort(spans.begin(), spans.end(), [](const Gap& a, const Gap& b) {
      return std::tie(a.start, a.end, a.station) < std::tie(b.start, b.end, b.station);
    });
    // Chains of overlapping spans are one disruption.
    std::size_t i = 0;
    while (i < spans.size()) {
      std::size_t j = i + 1;
      Timestamp chain_end = spans[i].end;
      while (j < spans.size() && spans[j].start < chain_end) {
        chain_end = std::max(chain_end, spans[j].end);
        ++j;
      }
      const Gap* anchor = &spans[i];
      for (std::size_t k = i + 1; k < j; ++k) {
        const auto& c = spans[k];
        const auto len = c.end - c.start;
        const auto best = anchor->end - anchor->start;
        if (len > best ||
            (len == best && (c.start < anchor->start ||
                             (c.start == anchor->start && *line.position(c.station) < *line.position(anchor->station)))))
          anchor = &c;
      }
      DisruptionRecord r;
      r.station = anchor->station;
      r.line = line_index;
      r.day = day_of(anchor->start);
      r.start = anchor->start;
      r.end = anchor->end;
      r.start_interval = start_interval_or_none(r.start, r.end, topo.grid);
      r.source = DisruptionSource::avl_detected;
      out.push_back(std::move(r));
      i = j;
    }
  }
  std::sort(out.begin(), out.end(), [](const DisruptionRecord& a, const DisruptionRecord& b) {
    return std::tie(a.start, a.station, a.line) < std::tie(b.start, b.station, b.line);
  });
  return out;
}

std::vector<DisruptionRecord> incident_records(const std::vector<IncidentLogRecord>& incidents,
                                               const ServiceGrid& grid) {
  std::vector<DisruptionRecord> out;
  out.reserve(incidents.size());
  for (const auto& inc : incidents) {
    DisruptionRecord r;
    r.station = inc.station;
    r.line = inc.line;
    r.day = day_of(inc.start);
    r.start = inc.start;
    r.end = inc.end;
    r.start_interval = start_interval_or_none(r.start, r.end, grid);
    r.source = DisruptionSource::incident_log;
    r.type = inc.type;
    r.cause = inc.cause;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DisruptionRecord> merge_logs(const std::vector<DisruptionRecord>& avl_detected,
                                         const std::vector<DisruptionRecord>& incidents, const ServiceGrid& grid,
                                         const DetectConfig& config) {
  std::vector<DisruptionRecord> all = avl_detected;
  all.insert(all.end(), incidents.begin(), incidents.end());
  std::sort(all.begin(), all.end(), [](const DisruptionRecord& a, const DisruptionRecord& b) {
    return std::tie(a.station, a.line, a.start, a.end) < std::tie(b.station, b.line, b.start, b.end);
  });

  std::vector<DisruptionRecord> out;
  std::size_t i = 0;
  while (i < all.size()) {
    DisruptionRecord cur = all[i];
    std::size_t j = i + 1;
    for (; j < all.size() && all[j].station == cur.station && all[j].line == cur.line && all[j].start <= cur.end;
         ++j) {
      cur.end = std::max(cur.end, all[j].end);
      cur.source = DisruptionSource::merged;
      if (cur.cause.empty() && all[j].source == DisruptionSource::incident_log) {
        cur.cause = all[j].cause;
        cur.type = all[j].type;
      }
    }
    if (cur.end - cur.start >= config.min_duration) {
      cur.day = day_of(cur.start);
      cur.start_interval = start_interval_or_none(cur.start, cur.end, grid);
      out.push_back(std::move(cur));
    }
    i = j;
  }
  std::sort(out.begin(), out.end(), [](const DisruptionRecord& a, const DisruptionRecord& b) {
    return std::tie(a.start, a.station, a.line, a.end) < std::tie(b.start, b.station, b.line, b.end);
  });
  return out;
}

TreatmentAssignment::TreatmentAssignment(StationIndex station, Day day, int start_interval, int end_interval,
                                         std::size_t stations, int intervals)
    : station_(station), day_(day), start_(start_interval), end_(end_interval), stations_(stations),
      intervals_(intervals) {
  if (station >= stations || start_interval < 0 || start_interval >= intervals || end_interval < start_interval ||
      end_interval >= intervals)
    throw std::invalid_argument("treatment assignment out of range");
}

TreatmentAssignment assign_treatment(const DisruptionRecord& record, const Topology& topology) {
  const int start = treatment_start_interval(record.start, record.end, topology.grid);
  const int end = treatment_end_interval(record.start, record.end, topology.grid);
  return TreatmentAssignment(record.station, day_of(record.start), start, end, topology.station_count(),
                             topology.grid.count());
}

std::vector<Day> disrupted_days(const std::vector<DisruptionRecord>& log) {
  std::set<Day> days;
  for (const auto& r : log) {
    for (Day d = day_of(r.start); d <= day_of(r.end); d += std::chrono::days{1}) days.insert(d);
  }
  return {days.begin(), days.end()};
}

DonorPool build_donor_pool(const std::vector<DisruptionRecord>& log, const std::vector<CalendarDay>& calendar,
                           const DisruptionRecord& target) {
  const auto excluded = disrupted_days(log);
  const Day target_day = day_of(target.start);
  DonorPool pool;
  for (const auto& c : calendar) {
    if (!c.analysis_day() || !is_weekday(c.date) || c.date == target_day) continue;
    if (std::binary_search(excluded.begin(), excluded.end(), c.date)) continue;
    pool.days.push_back(c.date);
  }
  std::sort(pool.days.begin(), pool.days.end());
  pool.days.erase(std::unique(pool.days.begin(), pool.days.end()), pool.days.end());
  if (pool.size() < 2)
    throw EstimationError(fmt::format("donor pool has {} undisrupted weekday(s); at least 2 are required",
                                      pool.size()));
  return pool;
}

std::vector<DisruptionRecord> concurrent_records(const std::vector<DisruptionRecord>& log,
                                                 const DisruptionRecord& target) {
  std::vector<DisruptionRecord> out;
  const Day d = day_of(target.start);
  for (const auto& r : log)
    if (!(r == target) && day_of(r.start) <= d && day_of(r.end) >= d) out.push_back(r);
  return out;
}

void write_disruptions_csv(const std::filesystem::path& path, const std::vector<DisruptionRecord>& log,
                           const Topology& topology) {
  csv::Writer w(path, {"station", "line", "day", "start", "end", "duration_min", "T_IS", "source"});
  for (const auto& r : log) {
    w.row({topology.stations[r.station].id, topology.lines[r.line].id, format_date(r.day),
           format_timestamp(r.start), format_timestamp(r.end), csv::format_double(r.duration_min(), 2),
           r.start_interval ? std::to_string(*r.start_interval) : std::string{}, std::string(to_string(r.source))});
  }
  w.close();
}

std::vector<DisruptionRecord> read_disruptions_csv(const std::filesystem::path& path, const Topology& topology) {
  csv::Reader r(path, {"station", "line", "day", "start", "end", "duration_min", "T_IS", "source"});
  std::vector<DisruptionRecord> out;
  while (auto row = r.next()) {
    const auto where = fmt::format("{}:{}", path.string(), r.line_number());
    auto station = topology.find_station((*row)[0]);
    auto line = topology.find_line((*row)[1]);
    if (!station) throw InputError(fmt::format("{}: unknown station '{}'", where, (*row)[0]));
    if (!line) throw InputError(fmt::format("{}: unknown line '{}'", where, (*row)[1]));
    DisruptionRecord rec;
    rec.station = *station;
    rec.line = *line;
    try {
      rec.day = parse_date((*row)[2]);
      rec.start = parse_timestamp((*row)[3]);
      rec.end = parse_timestamp((*row)[4]);
    } catch (const std::exception& e) {
      throw InputError(fmt::format("{}: {}", where, e.what()));
    }
    if (rec.end <= rec.start) throw InputError(fmt::format("{}: end must follow start", where));
    const auto& src = (*row)[7];
    if (src == "incident_log") rec.source = DisruptionSource::incident_log;
    else if (src == "avl_detected") rec.source = DisruptionSource::avl_detected;
    else if (src == "merged") rec.source = DisruptionSource::merged;
    else throw InputError(fmt::format("{}: unknown source '{}'", where, src));
    try {
      rec.start_interval = treatment_start_interval(rec.start, rec.end, topology.grid);
    } catch (const InputError&) {
      rec.start_interval.reset();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DisruptionRecord> detect_disruptions(const Dataset& ds, const DetectConfig& config) {
  return merge_logs(detect_from_avl(ds.avl, ds.topology, config), incident_records(ds.incidents, ds.topology.grid),
                    ds.topology.grid, config);
}

const DisruptionRecord& disruption_by_id(const std::vector<DisruptionRecord>& log, std::size_t id) {
  if (id == 0 || id > log.size())
    throw InputError(fmt::format("unknown disruption id {} (log has {} record(s))", id, log.size()));
  return log[id - 1];
}

}  // namespace metroscm
