#include "metroscm/report.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "json.hpp"
#include "metroscm/csv.hpp"

namespace metroscm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_weight(double weight, double threshold) {
  if (is_missing(weight)) return "";
  if (weight < threshold) return "-";
  return fmt::format("{:.3f}", weight);
}

std::string format_report_number(double value) {
  if (is_missing(value)) return "";
  if (value == 0.0) return "0.000";
  if (std::abs(value) < 1e-3) return fmt::format("{:.3e}", value);
  return fmt::format("{:.3f}", value);
}

std::string format_mspe_cell(double value, double se) {
  if (is_missing(se)) return format_report_number(value);
  return fmt::format("{} ({})", format_report_number(value), format_report_number(se));
}

std::string outcome_label(Outcome m) {
  switch (m) {
    case Outcome::entry_ridership: return "Entry ridership";
    case Outcome::exit_ridership: return "Exit ridership";
    case Outcome::avg_journey_time: return "Ave journey time";
    case Outcome::avg_speed: return "Ave speed";
    case Outcome::crowding_density: return "Crowding density";
  }
  return "";
}

void write_weights_csv(const fs::path& path, const EffectPanel& effects, const Topology& topology, double threshold) {
  csv::Writer w(path, {"station", "outcome", "donor_day", "weight"});
  for (const auto& e : effects.entries) {
    if (!e.ok) continue;
    const auto& c = e.fit.outer.weights;
    for (std::size_t j = 0; j < effects.pool.size(); ++j)
      w.row({topology.stations[e.station].id, std::string(outcome_name(e.outcome)), format_date(effects.pool.days[j]),
             format_weight(c[static_cast<Eigen::Index>(j)], threshold)});
  }
  w.close();
}

void write_weights_table_csv(const fs::path& path, const EffectPanel& effects, StationIndex station, double threshold) {
  std::vector<std::string> header{"d_N"};
  std::vector<const StationEffect*> columns;
  for (auto m : effects.outcomes) {
    header.push_back(outcome_label(m));
    columns.push_back(effects.find(station, m));
  }
  csv::Writer w(path, header);
  for (std::size_t j = 0; j < effects.pool.size(); ++j) {
    std::vector<std::string> row{format_date(effects.pool.days[j])};
    for (const auto* e : columns)
      row.push_back(e && e->ok ? format_weight(e->fit.outer.weights[static_cast<Eigen::Index>(j)], threshold) : "");
    w.row(row);
  }
  w.close();
}

void write_predictors_report(const fs::path& path, const FitResult& fit) {
  const auto& p = fit.validation_predictors;
  const auto k = static_cast<Eigen::Index>(p.k());
  const auto J = static_cast<Eigen::Index>(p.J());
  csv::Writer w(path, {"predictor", "disrupted", "synthetic", "average", "single"});
  for (Eigen::Index h = 0; h < k; ++h) {
    const double s = p.scale[h];
    const Eigen::RowVectorXd donors = p.X0.row(h) * s;
    const double treated = p.X1[h] * s;
    const double synthetic = donors.dot(fit.outer.weights);
    const double average = donors.sum() / static_cast<double>(J);
    const double single = donors[static_cast<Eigen::Index>(fit.single_control)];
    w.row({std::string(predictor_name(p.spec[static_cast<std::size_t>(h)])), format_report_number(treated),
           format_report_number(synthetic), format_report_number(average), format_report_number(single)});
  }
  w.close();
}

void write_mspe_report(const fs::path& path, const EffectPanel& effects, StationIndex station) {
  csv::Writer w(path, {"outcome", "synthetic", "average", "single"});
  for (auto m : effects.outcomes) {
    const auto* e = effects.find(station, m);
    if (!e || !e->ok) {
      w.row({outcome_label(m), "", "", ""});
      continue;
    }
    const auto& f = e->fit;
    w.row({outcome_label(m), format_mspe_cell(f.mspe_synthetic, f.se_mspe_synthetic),
           format_mspe_cell(f.mspe_average, f.se_mspe_average), format_mspe_cell(f.mspe_single, f.se_mspe_single)});
  }
  w.close();
}

void write_effects_csv(const fs::path& path, const EffectPanel& effects, const Topology& topology) {
  csv::Writer w(path, {"station", "outcome", "interval", "observed", "counterfactual", "effect", "se"});
  for (const auto& e : effects.entries) {
    if (!e.ok) continue;
    const auto& s = e.fit.effects;
    for (std::size_t i = 0; i < s.size(); ++i)
      w.row({topology.stations[e.station].id, std::string(outcome_name(e.outcome)), std::to_string(s.interval(i)),
             csv::format_double(s.observed[i], 6), csv::format_double(s.counterfactual[i], 6),
             csv::format_double(s.effect[i], 6), csv::format_double(i < s.se.size() ? s.se[i] : kMissing, 6)});
  }
  w.close();
}

void write_propagation_summary(const fs::path& path, const EffectPanel& effects, const NetworkGraph& graph,
                               const PropagationThresholds& thresholds) {
  const auto& topo = graph.topology();
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string{}; };
  csv::Writer w(path,
                {"outcome", "station", "hop_distance", "interchange", "onset", "peak", "peak_magnitude", "recovery"});
  for (auto m : effects.outcomes)
    for (const auto& p : summarize_propagation(effects, graph, m, thresholds))
      w.row({std::string(outcome_name(m)), topo.stations[p.station].id, std::to_string(p.hop_distance),
             p.interchange ? "1" : "0", opt(p.onset), opt(p.peak), csv::format_double(p.peak_magnitude, 6),
             opt(p.recovery)});
  w.close();
}

void write_run_manifest(const fs::path& path, const RunSummary& run, const Config& config, const EffectPanel& effects,
                        const Topology& topology) {
  json doc;
  doc["command"] = run.command;
  doc["manifest"] = run.manifest;
  const auto& d = run.disruption;
  doc["disruption"] = {{"id", run.disruption_id},
                       {"station", topology.stations[d.station].id},
                       {"line", topology.lines[d.line].id},
                       {"day", format_date(d.day)},
                       {"start", format_timestamp(d.start)},
                       {"end", format_timestamp(d.end)},
                       {"treatment_start", effects.treatment_start},
                       {"source", std::string(to_string(d.source))}};
  doc["split"] = {{"training", {0, effects.split.last_training}},
                  {"validation", {effects.split.last_training + 1, effects.split.treatment_start - 1}}};
  doc["donor_pool"] = json::array();
  for (auto day : effects.pool.days) doc["donor_pool"].push_back(format_date(day));
  doc["config"] = json::parse(config.to_json());
  json failures = json::array();
  for (const auto* e : effects.failures())
    failures.push_back({{"station", topology.stations[e->station].id},
                        {"outcome", std::string(outcome_name(e->outcome))},
                        {"error", e->error}});
  doc["failed_fits"] = failures;
  doc["outputs"] = run.outputs;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError(fmt::format("cannot write {}", path.string()));
  os << doc.dump(2) << '\n';
}

}  // namespace metroscm
