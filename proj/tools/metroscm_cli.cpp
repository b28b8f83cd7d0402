// metroscm: simulate, ingest, detect, estimate, report.
//
// Exit codes: 0 success, 1 input error, 2 estimation failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "metroscm/config.hpp"
#include "metroscm/csv.hpp"
#include "metroscm/data.hpp"
#include "metroscm/detect.hpp"
#include "metroscm/network.hpp"
#include "metroscm/outcomes.hpp"
#include "metroscm/report.hpp"
#include "metroscm/simgen.hpp"
#include "metroscm/spillover.hpp"

namespace fs = std::filesystem;
using namespace metroscm;

namespace {

constexpr int kInputError = 1;
constexpr int kEstimationError = 2;

struct Options {
  // simulate
  std::string spec_path;
  bool force = false;
  std::optional<std::uint64_t> sim_seed;
  // shared
  std::string manifest;
  std::string out;
  // estimate
  std::size_t disruption_id = 1;
  std::string log_path;
  std::string outcomes;
  std::string stations;
  std::string geo_intervals;
  std::string predictor_outcome;
  bool no_bootstrap = false;
  long min_duration_s = 300;
  // report
  std::string run_dir;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

Outcome outcome_or_throw(const std::string& name) {
  auto m = parse_outcome(name);
  if (!m) throw InputError(fmt::format("unknown outcome '{}'", name));
  return *m;
}

void finish_config(Config& cfg, const Options& opt) {
  if (!opt.outcomes.empty()) {
    cfg.outcomes.clear();
    for (const auto& name : split_list(opt.outcomes)) cfg.outcomes.push_back(outcome_or_throw(name));
  }
  if (!opt.geo_intervals.empty()) {
    cfg.geo_intervals.clear();
    for (const auto& t : split_list(opt.geo_intervals)) cfg.geo_intervals.push_back(static_cast<int>(csv::parse_int(t)));
  }
  if (!opt.predictor_outcome.empty()) cfg.predictor_outcome = outcome_or_throw(opt.predictor_outcome);
  cfg.detect.min_duration = Seconds{opt.min_duration_s};
  cfg.scm.bootstrap_enabled = !opt.no_bootstrap;
  cfg.scm.bootstrap.workers = cfg.workers;
  cfg.apply_seed();
  cfg.validate();
}

fs::path output_dir(const Options& opt) {
  if (opt.out.empty()) throw InputError("--out is required");
  fs::path dir(opt.out);
  fs::create_directories(dir);
  return dir;
}

int cmd_simulate(const Options& opt, const Config& cfg) {
  SimSpec spec = opt.spec_path.empty() ? default_spec() : read_sim_spec(opt.spec_path);
  if (opt.sim_seed) spec.seed = *opt.sim_seed;
  spec.validate();
  if (opt.out.empty()) throw InputError("--out is required");
  const fs::path out(opt.out);
  if (fs::exists(out) && !fs::is_empty(out) && !opt.force)
    throw InputError(fmt::format("{} exists and is not empty (use --force to replace it)", out.string()));

  const auto result = simulate(spec, cfg.workers);
  // Build next to the target and move into place, so a failure leaves nothing behind.
  fs::path staging = out;
  staging += ".partial";
  fs::remove_all(staging);
  try {
    fs::create_directories(staging);
    write_simulation(staging, result);
    std::ofstream(staging / "spec.json", std::ios::binary) << sim_spec_to_json(spec);
    if (fs::exists(out)) fs::remove_all(out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    fs::rename(staging, out);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  std::cout << fmt::format("simulated {} day(s): {} trips, {} abandonments, {} train events -> {}\n",
                           result.dataset.calendar.size(), result.dataset.trips.size(),
                           result.dataset.abandonments.size(), result.dataset.avl.size(), out.string());
  return 0;
}

int cmd_ingest(const Options& opt) {
  const auto ds = load_dataset(opt.manifest);
  std::cout << ds.report.summary();
  std::cout << fmt::format("{} stations, {} lines, {} analysis day(s)\n", ds.topology.station_count(),
                           ds.topology.lines.size(), ds.analysis_days().size());
  if (!opt.out.empty()) {
    const auto dir = output_dir(opt);
    const NetworkGraph graph(ds.topology);
    graph.write_distances_csv(dir / "distances.csv");
    write_panel_csv(dir / "panel.csv", build_panel(ds, graph), ds.topology);
  }
  return 0;
}

int cmd_detect(const Options& opt, const Config& cfg) {
  const auto ds = load_dataset(opt.manifest);
  const auto log = detect_disruptions(ds, cfg.detect);
  const auto dir = output_dir(opt);
  write_disruptions_csv(dir / "disruptions.csv", log, ds.topology);
  std::cout << fmt::format("{} disruption(s) -> {}\n", log.size(), (dir / "disruptions.csv").string());
  return 0;
}

int cmd_estimate(const Options& opt, const Config& cfg) {
  const auto ds = load_dataset(opt.manifest);
  const auto log = opt.log_path.empty() ? detect_disruptions(ds, cfg.detect)
                                        : read_disruptions_csv(opt.log_path, ds.topology);
  const auto& record = disruption_by_id(log, opt.disruption_id);
  if (!record.start_interval)
    throw InputError(fmt::format("disruption {} has no interval with five minutes of overlap", opt.disruption_id));
  for (const auto& other : concurrent_records(log, record))
    std::cerr << fmt::format("warning: {} is also disrupted on {}; effects are joint\n",
                             ds.topology.stations[other.station].id, format_date(other.day));
  const auto pool = build_donor_pool(log, ds.calendar, record);

  const NetworkGraph graph(ds.topology);
  const auto panel = build_panel(ds, graph);
  NetworkConfig net;
  net.scm = cfg.scm;
  net.outcomes = cfg.outcomes;
  net.workers = cfg.workers;
  for (const auto& id : split_list(opt.stations)) {
    auto s = ds.topology.find_station(id);
    if (!s) throw InputError(fmt::format("unknown station '{}'", id));
    net.stations.push_back(*s);
  }
  const auto effects = estimate_network(ds, panel, record, pool, net);
  for (const auto* e : effects.failures())
    std::cerr << fmt::format("warning: {} {}: {}\n", ds.topology.stations[e->station].id, outcome_name(e->outcome),
                             e->error);
  if (effects.failures().size() == effects.entries.size()) throw EstimationError("every fit failed");

  const auto dir = output_dir(opt);
  RunSummary run;
  run.command = "estimate";
  run.manifest = opt.manifest;
  run.disruption_id = opt.disruption_id;
  run.disruption = record;
  const auto direct = record.station;

  write_weights_csv(dir / "weights.csv", effects, ds.topology, cfg.weight_display_threshold);
  write_weights_table_csv(dir / "weights_table.csv", effects, direct, cfg.weight_display_threshold);
  run.outputs = {"weights.csv", "weights_table.csv"};
  if (const auto* e = effects.find(direct, cfg.predictor_outcome); e && e->ok) {
    write_predictors_report(dir / "predictors_report.csv", e->fit);
    run.outputs.push_back("predictors_report.csv");
  }
  write_mspe_report(dir / "mspe_report.csv", effects, direct);
  write_effects_csv(dir / "effects.csv", effects, ds.topology);
  write_propagation_summary(dir / "propagation_summary.csv", effects, graph, cfg.propagation);
  run.outputs.insert(run.outputs.end(), {"mspe_report.csv", "effects.csv", "propagation_summary.csv"});

  std::vector<int> intervals = cfg.geo_intervals;
  if (intervals.empty()) {
    const auto treatment = assign_treatment(record, ds.topology);
    const int last = std::min(treatment.end_interval() + 4, ds.topology.grid.count() - 1);
    intervals = interval_range(treatment.start_interval(), last);
  }
  bool has_coordinates = true;
  for (const auto& s : ds.topology.stations)
    has_coordinates = has_coordinates && std::isfinite(s.latitude) && std::isfinite(s.longitude);
  if (has_coordinates) {
    for (auto m : cfg.outcomes)
      for (const auto& p : export_geo(effects, ds.topology, m, intervals, dir / "geo", cfg.geo))
        run.outputs.push_back(fs::relative(p, dir).generic_string());
  } else {
    std::cerr << "warning: stations lack coordinates; map snapshots skipped\n";
  }
  run.outputs.push_back("run_manifest.json");
  write_run_manifest(dir / "run_manifest.json", run, cfg, effects, ds.topology);
  std::cout << fmt::format("estimated {} fit(s), {} failed; donor pool J = {} -> {}\n", effects.entries.size(),
                           effects.failures().size(), pool.size(), dir.string());
  return 0;
}

void print_table(std::ostream& os, const fs::path& path, const std::string& title) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(csv::split_line(line));
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  os << title << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << fmt::format("{:<{}}", r[i], width[i] + 2);
    os << '\n';
  }
  os << '\n';
}

int cmd_report(const Options& opt) {
  const fs::path dir(opt.run_dir);
  if (!fs::exists(dir / "run_manifest.json")) throw InputError(fmt::format("{} is not an estimate output", dir.string()));
  std::ostringstream os;
  print_table(os, dir / "weights_table.csv", "Synthetic control weights at the disrupted station");
  if (fs::exists(dir / "predictors_report.csv"))
    print_table(os, dir / "predictors_report.csv", "Predictor means over the validation window");
  print_table(os, dir / "mspe_report.csv", "Pre-treatment mean squared prediction error (bootstrap SE)");
  print_table(os, dir / "propagation_summary.csv", "Propagation");
  if (opt.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(opt.out, std::ios::binary);
    if (!f) throw InputError(fmt::format("cannot write {}", opt.out));
    f << os.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-control estimation of metro disruption impacts"};
  app.require_subcommand(1);
  Options opt;
  Config cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--workers", cfg.workers, "Worker threads (results do not depend on it)")->capture_default_str();
  };
  auto add_estimation = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Master seed for multi-start and bootstrap")->capture_default_str();
    sub->add_option("-B,--resamples", cfg.scm.bootstrap.resamples, "Bootstrap resamples")->capture_default_str();
    sub->add_flag("--no-bootstrap", opt.no_bootstrap, "Skip standard errors");
    sub->add_option("--starts", cfg.scm.outer.starts, "Multi-start count for the importance search")
        ->capture_default_str();
    sub->add_option("--evaluations", cfg.scm.outer.max_evaluations, "Evaluation budget per start")
        ->capture_default_str();
    sub->add_option("--bootstrap-starts", cfg.scm.bootstrap_outer.starts, "Multi-start count inside resamples")
        ->capture_default_str();
    sub->add_option("--bootstrap-evaluations", cfg.scm.bootstrap_outer.max_evaluations,
                    "Evaluation budget per start inside resamples")
        ->capture_default_str();
    sub->add_option("--importance-floor", cfg.scm.outer.importance_floor, "Lower bound on predictor importance")
        ->capture_default_str();
    sub->add_option("--training-fraction", cfg.scm.training_fraction, "Share of pre-period used for training")
        ->capture_default_str();
    sub->add_option("--outcomes", opt.outcomes, "Comma-separated outcomes (default: all five)");
    sub->add_option("--stations", opt.stations, "Comma-separated station ids (default: all)");
    sub->add_option("--intervals", opt.geo_intervals, "Comma-separated map snapshot intervals");
    sub->add_option("--se-multiplier", cfg.propagation.se_multiplier, "Exceedance threshold in SEs")
        ->capture_default_str();
    sub->add_option("--run-length", cfg.propagation.run_length, "Consecutive intervals for onset and recovery")
        ->capture_default_str();
    sub->add_option("--weight-threshold", cfg.weight_display_threshold, "Weights below this print as '-'")
        ->capture_default_str();
    sub->add_option("--predictor-outcome", opt.predictor_outcome,
                    "Outcome whose fit fills predictors_report.csv (default avg_speed)");
  };
  auto add_detect = [&](CLI::App* sub) {
    sub->add_option("--headway-multiplier", cfg.detect.headway_multiplier, "Gap threshold in scheduled headways")
        ->capture_default_str();
    sub->add_option("--min-duration", opt.min_duration_s, "Shortest disruption kept, in seconds")->capture_default_str();
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
  simulate_cmd->add_option("--spec", opt.spec_path, "Simulation spec (JSON); built-in default when omitted");
  simulate_cmd->add_option("--out", opt.out, "Output directory")->required();
  simulate_cmd->add_option("--seed", opt.sim_seed, "Override the spec's seed");
  simulate_cmd->add_flag("--force", opt.force, "Replace a non-empty output directory");
  add_common(simulate_cmd);

  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a dataset and optionally write the outcome panel");
  ingest_cmd->add_option("--manifest", opt.manifest, "Dataset manifest")->required();
  ingest_cmd->add_option("--out", opt.out, "Write panel.csv and distances.csv here");

  auto* detect_cmd = app.add_subcommand("detect", "Build the disruption log");
  detect_cmd->add_option("--manifest", opt.manifest, "Dataset manifest")->required();
  detect_cmd->add_option("--out", opt.out, "Output directory")->required();
  add_detect(detect_cmd);

  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate direct and spillover effects of one disruption");
  estimate_cmd->add_option("--manifest", opt.manifest, "Dataset manifest")->required();
  estimate_cmd->add_option("--disruption", opt.disruption_id, "1-based row of the disruption log")
      ->capture_default_str();
  estimate_cmd->add_option("--log", opt.log_path, "disruptions.csv to use instead of re-detecting");
  estimate_cmd->add_option("--out", opt.out, "Output directory")->required();
  add_common(estimate_cmd);
  add_estimation(estimate_cmd);
  add_detect(estimate_cmd);

  auto* report_cmd = app.add_subcommand("report", "Print the report tables of an estimate run");
  report_cmd->add_option("--dir", opt.run_dir, "Output directory of an estimate run")->required();
  report_cmd->add_option("--out", opt.out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kInputError;
  }

  try {
    if (*simulate_cmd) {
      cfg.validate();
      return cmd_simulate(opt, cfg);
    }
    if (*ingest_cmd) return cmd_ingest(opt);
    finish_config(cfg, opt);
    if (*detect_cmd) return cmd_detect(opt, cfg);
    if (*estimate_cmd) return cmd_estimate(opt, cfg);
    if (*report_cmd) return cmd_report(opt);
  } catch (const EstimationError& e) {
    std::cerr << "estimation failed: " << e.what() << '\n';
    return kEstimationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
