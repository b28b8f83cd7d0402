#include "metroscm/spillover.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"
#include "metroscm/csv.hpp"
#include "metroscm/parallel.hpp"

namespace metroscm {

std::string_view to_string(EffectRole r) { return r == EffectRole::direct ? "direct" : "spillover"; }

const StationEffect* EffectPanel::find(StationIndex station, Outcome outcome) const {
  for (const auto& e : entries)
    if (e.station == station && e.outcome == outcome) return &e;
  return nullptr;
}

std::vector<const StationEffect*> EffectPanel::failures() const {
  std::vector<const StationEffect*> out;
  for (const auto& e : entries)
    if (!e.ok) out.push_back(&e);
  return out;
}

EffectPanel estimate_network(const Dataset& ds, const OutcomePanel& panel, const DisruptionRecord& disruption,
                             const DonorPool& pool, const NetworkConfig& config) {
  const auto treatment = assign_treatment(disruption, ds.topology);
  EffectPanel out;
  out.disruption = disruption;
  out.treatment_start = treatment.start_interval();
  out.pool = pool;
  out.split = make_split(out.treatment_start, config.scm.training_fraction);
  out.outcomes = config.outcomes;

  std::vector<StationIndex> stations = config.stations;
  if (stations.empty())
    for (StationIndex a = 0; a < ds.topology.station_count(); ++a) stations.push_back(a);

  for (auto a : stations)
    for (auto m : config.outcomes) {
      StationEffect e;
      e.station = a;
      e.outcome = m;
      e.role = a == disruption.station ? EffectRole::direct : EffectRole::spillover;
      out.entries.push_back(std::move(e));
    }

  const auto spec = default_predictors(ds);
  ScmConfig job_config = config.scm;
  job_config.bootstrap.workers = 1;
  parallel_for(out.entries.size(), config.workers, [&](std::size_t i) {
    auto& e = out.entries[i];
    try {
      const auto inputs =
          prepare_fit(panel, ds, e.station, e.outcome, treatment.day(), out.split, pool, spec);
      e.fit = fit_station(inputs, job_config);
      e.ok = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
  });
  return out;
}

double exceedance_threshold(const EffectSeries& s, std::size_t i, const PropagationThresholds& th) {
  if (i < s.se.size() && !is_missing(s.se[i])) return std::max(th.se_multiplier * s.se[i], th.absolute_floor);
  return th.absolute_floor;
}

StationPropagation summarize_series(const EffectSeries& s, const PropagationThresholds& th) {
  StationPropagation p;
  const auto n = s.size();
  const auto run = static_cast<std::size_t>(std::max(1, th.run_length));
  auto above = [&](std::size_t i) { return !is_missing(s.effect[i]) && std::abs(s.effect[i]) > exceedance_threshold(s, i, th); };
  auto below = [&](std::size_t i) { return !is_missing(s.effect[i]) && std::abs(s.effect[i]) <= exceedance_threshold(s, i, th); };

  std::optional<std::size_t> onset;
  for (std::size_t i = 0; i + run <= n && !onset; ++i) {
    bool all = true;
    for (std::size_t k = 0; k < run; ++k) all = all && above(i + k);
    if (all) onset = i;
  }
  if (!onset) return p;
  std::size_t peak = *onset;
  for (std::size_t i = *onset; i < n; ++i)
    if (!is_missing(s.effect[i]) && std::abs(s.effect[i]) > std::abs(s.effect[peak])) peak = i;
  p.onset = s.interval(*onset);
  p.peak = s.interval(peak);
  p.peak_magnitude = s.effect[peak];
  for (std::size_t i = peak + 1; i + run <= n; ++i) {
    bool all = true;
    for (std::size_t k = 0; k < run; ++k) all = all && below(i + k);
    if (all) {
      p.recovery = s.interval(i);
      break;
    }
  }
  return p;
}

std::vector<StationPropagation> summarize_propagation(const EffectPanel& effects, const NetworkGraph& graph,
                                                      Outcome outcome, const PropagationThresholds& th) {
  std::vector<StationPropagation> out;
  const auto& topo = graph.topology();
  for (const auto& e : effects.entries) {
    if (e.outcome != outcome) continue;
    StationPropagation p;
    if (e.ok) p = summarize_series(e.fit.effects, th);
    p.station = e.station;
    p.hop_distance = graph.hop_distance(effects.disruption.station, e.station);
    p.interchange = topo.stations[e.station].interchange();
    out.push_back(p);
  }
  return out;
}

void write_propagation_csv(const std::filesystem::path& path, const std::vector<StationPropagation>& summary,
                           const Topology& topology) {
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string{}; };
  csv::Writer w(path, {"station", "hop_distance", "interchange", "onset", "peak", "peak_magnitude", "recovery"});
  for (const auto& p : summary)
    w.row({topology.stations[p.station].id, std::to_string(p.hop_distance), p.interchange ? "1" : "0", opt(p.onset),
           opt(p.peak), csv::format_double(p.peak_magnitude, 6), opt(p.recovery)});
  w.close();
}

// ------------------------------------------------------------ map snapshots

std::vector<double> severity_edges(std::vector<double> magnitudes, const std::vector<double>& quantiles) {
  magnitudes.erase(std::remove_if(magnitudes.begin(), magnitudes.end(), [](double m) { return is_missing(m); }),
                   magnitudes.end());
  std::sort(magnitudes.begin(), magnitudes.end());
  std::vector<double> edges;
  for (double q : quantiles) {
    if (magnitudes.empty()) {
      edges.push_back(0.0);
      continue;
    }
    // Linear interpolation between order statistics.
    const double pos = q * static_cast<double>(magnitudes.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, magnitudes.size() - 1);
    edges.push_back(magnitudes[lo] + (pos - static_cast<double>(lo)) * (magnitudes[hi] - magnitudes[lo]));
  }
  return edges;
}

std::string severity_label(double magnitude, const std::vector<double>& edges, const std::vector<std::string>& labels) {
  if (labels.size() != edges.size() + 1) throw std::invalid_argument("need one more severity label than cut points");
  if (is_missing(magnitude)) return "missing";
  std::size_t bin = 0;
  while (bin < edges.size() && magnitude > edges[bin]) ++bin;
  return labels[bin];
}

std::vector<GeoFeature> geo_features(const EffectPanel& effects, const Topology& topology, Outcome outcome,
                                     int interval) {
  std::vector<GeoFeature> out;
  const auto& grid = topology.grid;
  for (const auto& e : effects.entries) {
    if (e.outcome != outcome) continue;
    const auto& st = topology.stations[e.station];
    if (!std::isfinite(st.latitude) || !std::isfinite(st.longitude))
      throw InputError(fmt::format("station {} has no coordinates", st.id));
    GeoFeature f;
    f.station = st.id;
    f.name = st.name;
    f.latitude = st.latitude;
    f.longitude = st.longitude;
    f.role = std::string(to_string(e.role));
    f.interval = interval;
    f.interval_label =
        fmt::format("{}-{}", format_clock(grid.service_start + interval * grid.interval_length).substr(0, 5),
                    format_clock(grid.service_start + (interval + 1) * grid.interval_length).substr(0, 5));
    if (e.ok) {
      const auto& s = e.fit.effects;
      const auto i = interval - s.first_interval;
      if (i >= 0 && static_cast<std::size_t>(i) < s.size()) {
        f.effect = s.effect[static_cast<std::size_t>(i)];
        if (static_cast<std::size_t>(i) < s.se.size()) f.se = s.se[static_cast<std::size_t>(i)];
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

nlohmann::json number_or_null(double v) { return is_missing(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double number_from(const nlohmann::json& j) { return j.is_null() ? kMissing : j.get<double>(); }

}  // namespace

std::vector<std::filesystem::path> export_geo(const EffectPanel& effects, const Topology& topology, Outcome outcome,
                                              const std::vector<int>& intervals, const std::filesystem::path& dir,
                                              const GeoConfig& config) {
  std::vector<std::vector<GeoFeature>> snapshots;
  std::vector<double> magnitudes;
  for (int t : intervals) {
    snapshots.push_back(geo_features(effects, topology, outcome, t));
    for (const auto& f : snapshots.back()) magnitudes.push_back(std::abs(f.effect));
  }
  const auto edges = severity_edges(magnitudes, config.quantiles);

  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t s = 0; s < intervals.size(); ++s) {
    nlohmann::json fc;
    fc["type"] = "FeatureCollection";
    fc["outcome"] = std::string(outcome_name(outcome));
    fc["interval"] = intervals[s];
    fc["features"] = nlohmann::json::array();
    for (auto& f : snapshots[s]) {
      f.severity = severity_label(std::abs(f.effect), edges, config.labels);
      nlohmann::json feature;
      feature["type"] = "Feature";
      feature["geometry"] = {{"type", "Point"}, {"coordinates", {f.longitude, f.latitude}}};
      feature["properties"] = {{"station", f.station},
                               {"name", f.name},
                               {"role", f.role},
                               {"interval", f.interval},
                               {"interval_label", f.interval_label},
                               {"effect", number_or_null(f.effect)},
                               {"se", number_or_null(f.se)},
                               {"severity", f.severity}};
      fc["features"].push_back(std::move(feature));
    }
    const auto path = dir / fmt::format("geo_{}_t{:02d}.geojson", outcome_name(outcome), intervals[s]);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError(fmt::format("cannot write {}", path.string()));
    os << fc.dump(2) << '\n';
    paths.push_back(path);
  }
  return paths;
}

std::vector<GeoFeature> read_geo(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(fmt::format("cannot open {}", path.string()));
  nlohmann::json fc;
  try {
    fc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  std::vector<GeoFeature> out;
  for (const auto& feature : fc.at("features")) {
    const auto& p = feature.at("properties");
    const auto& c = feature.at("geometry").at("coordinates");
    GeoFeature f;
    f.station = p.at("station").get<std::string>();
    f.name = p.at("name").get<std::string>();
    f.longitude = c.at(0).get<double>();
    f.latitude = c.at(1).get<double>();
    f.role = p.at("role").get<std::string>();
    f.interval = p.at("interval").get<int>();
    f.interval_label = p.at("interval_label").get<std::string>();
    f.effect = number_from(p.at("effect"));
    f.se = number_from(p.at("se"));
    f.severity = p.at("severity").get<std::string>();
    out.push_back(std::move(f));
  }
  return out;
}

// ------------------------------------------------------------ crowding bands

std::string_view to_string(CrowdingBin b) {
  switch (b) {
    case CrowdingBin::blue: return "blue";
    case CrowdingBin::green: return "green";
    case CrowdingBin::yellow: return "yellow";
    case CrowdingBin::orange: return "orange";
    case CrowdingBin::red: return "red";
    case CrowdingBin::overflow: return "overflow";
  }
  return "overflow";
}

CrowdingBin crowding_bin(double density) {
  if (std::isnan(density) || density < 0.0)
    throw std::domain_error(fmt::format("crowding density must be non-negative, got {}", density));
  if (density < 0.5) return CrowdingBin::blue;
  if (density < 1.0) return CrowdingBin::green;
  if (density < 2.0) return CrowdingBin::yellow;
  if (density < 3.0) return CrowdingBin::orange;
  if (density < 6.0) return CrowdingBin::red;
  return CrowdingBin::overflow;
}

}  // namespace metroscm
