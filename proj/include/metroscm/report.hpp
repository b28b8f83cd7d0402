#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "metroscm/config.hpp"
#include "metroscm/network.hpp"
#include "metroscm/spillover.hpp"

namespace metroscm {

/// "-" below the threshold, three decimals otherwise.
std::string format_weight(double weight, double threshold = 1e-4);
/// Three decimals, or scientific notation with three digits below 1e-3.
std::string format_report_number(double value);
/// "value (se)"; the parenthesis is omitted when the SE is unknown.
std::string format_mspe_cell(double value, double se);

/// Report label of an outcome, e.g. "Ave journey time".
std::string outcome_label(Outcome m);

/// station,outcome,donor_day,weight for every successful fit.
void write_weights_csv(const std::filesystem::path& path, const EffectPanel& effects, const Topology& topology,
                       double threshold = 1e-4);
/// One row per donor day, one column per outcome, for a single station.
void write_weights_table_csv(const std::filesystem::path& path, const EffectPanel& effects, StationIndex station,
                             double threshold = 1e-4);
/// predictor,disrupted,synthetic,average,single: validation-window predictor means
/// of the treated day and of the three controls.
void write_predictors_report(const std::filesystem::path& path, const FitResult& fit);
/// outcome,synthetic,average,single for one station, with bootstrap SEs.
void write_mspe_report(const std::filesystem::path& path, const EffectPanel& effects, StationIndex station);
/// station,outcome,interval,observed,counterfactual,effect,se
void write_effects_csv(const std::filesystem::path& path, const EffectPanel& effects, const Topology& topology);
/// outcome,station,hop_distance,interchange,onset,peak,peak_magnitude,recovery
void write_propagation_summary(const std::filesystem::path& path, const EffectPanel& effects,
                               const NetworkGraph& graph, const PropagationThresholds& thresholds);

struct RunSummary {
  std::string command;
  std::string manifest;
  std::size_t disruption_id = 0;
  DisruptionRecord disruption;
  std::vector<std::string> outputs;  // relative to the output directory
};

/// Machine-readable record of one estimate run: inputs, config, pool and outputs.
/// Contains nothing that varies between identical runs.
void write_run_manifest(const std::filesystem::path& path, const RunSummary& run, const Config& config,
                        const EffectPanel& effects, const Topology& topology);

}  // namespace metroscm
