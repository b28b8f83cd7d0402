#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metroscm/detect.hpp"
#include "metroscm/network.hpp"
#include "metroscm/outcomes.hpp"
#include "metroscm/scm.hpp"

namespace metroscm {

enum class EffectRole : std::uint8_t { direct, spillover };
std::string_view to_string(EffectRole r);

struct StationEffect {
  StationIndex station = 0;
  Outcome outcome = Outcome::entry_ridership;
  EffectRole role = EffectRole::spillover;
  bool ok = false;
  std::string error;  // set when the fit failed
  FitResult fit;
};

struct EffectPanel {
  DisruptionRecord disruption;
  int treatment_start = 0;
  DonorPool pool;
  SplitConfig split;
  std::vector<Outcome> outcomes;
  std::vector<StationEffect> entries;  // station-major, outcomes in the order above

  const StationEffect* find(StationIndex station, Outcome outcome) const;
  std::vector<const StationEffect*> failures() const;
};

struct NetworkConfig {
  ScmConfig scm;
  std::vector<Outcome> outcomes{kOutcomes.begin(), kOutcomes.end()};
  std::vector<StationIndex> stations;  // empty = every station
  unsigned workers = 1;
};

/// Fits every (station, outcome) independently. A failed fit is recorded on its
/// entry and does not stop the others. Effects cover t >= treatment start only.
EffectPanel estimate_network(const Dataset& dataset, const OutcomePanel& panel, const DisruptionRecord& disruption,
                             const DonorPool& pool, const NetworkConfig& config);

struct PropagationThresholds {
  double se_multiplier = 2.0;
  double absolute_floor = 1e-9;
  int run_length = 2;
};

struct StationPropagation {
  StationIndex station = 0;
  int hop_distance = 0;
  bool interchange = false;
  std::optional<int> onset;
  std::optional<int> peak;
  double peak_magnitude = kMissing;  // signed effect at the peak
  std::optional<int> recovery;
};

/// Threshold at one interval: max(multiplier * SE, floor); the floor alone when SE is unknown.
double exceedance_threshold(const EffectSeries& series, std::size_t i, const PropagationThresholds& thresholds);

StationPropagation summarize_series(const EffectSeries& series, const PropagationThresholds& thresholds);

std::vector<StationPropagation> summarize_propagation(const EffectPanel& effects, const NetworkGraph& graph,
                                                      Outcome outcome, const PropagationThresholds& thresholds = {});

/// station,hop_distance,interchange,onset,peak,peak_magnitude,recovery
void write_propagation_csv(const std::filesystem::path& path, const std::vector<StationPropagation>& summary,
                           const Topology& topology);

// ------------------------------------------------------------ map snapshots

struct GeoFeature {
  std::string station;
  std::string name;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string role;
  int interval = 0;
  std::string interval_label;
  double effect = kMissing;
  double se = kMissing;
  std::string severity;
  friend bool operator==(const GeoFeature&, const GeoFeature&) = default;
};

struct GeoConfig {
  std::vector<double> quantiles{0.5, 0.8};                        // of |effect| over all snapshot features
  std::vector<std::string> labels{"low", "moderate", "severe"};  // one more than quantiles
};

/// Severity cut points: the configured quantiles of the given magnitudes.
std::vector<double> severity_edges(std::vector<double> magnitudes, const std::vector<double>& quantiles);
std::string severity_label(double magnitude, const std::vector<double>& edges, const std::vector<std::string>& labels);

std::vector<GeoFeature> geo_features(const EffectPanel& effects, const Topology& topology, Outcome outcome,
                                     int interval);

/// Writes one GeoJSON FeatureCollection per interval into `dir`; returns the paths.
std::vector<std::filesystem::path> export_geo(const EffectPanel& effects, const Topology& topology, Outcome outcome,
                                              const std::vector<int>& intervals, const std::filesystem::path& dir,
                                              const GeoConfig& config = {});

std::vector<GeoFeature> read_geo(const std::filesystem::path& path);

// ------------------------------------------------------------ crowding bands

enum class CrowdingBin : std::uint8_t { blue, green, yellow, orange, red, overflow };
std::string_view to_string(CrowdingBin b);

/// Standing density band: [0,0.5) [0.5,1) [1,2) [2,3) [3,6) and >= 6.
CrowdingBin crowding_bin(double density);

}  // namespace metroscm
