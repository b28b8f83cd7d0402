#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metroscm/detect.hpp"
#include "metroscm/outcomes.hpp"
#include "metroscm/scm.hpp"
#include "metroscm/spillover.hpp"

namespace metroscm {

/// Every numeric default of the pipeline in one place.
struct Config {
  std::uint64_t seed = 20190311;
  unsigned workers = 1;  // never changes results
  DetectConfig detect;
  ScmConfig scm;
  std::vector<Outcome> outcomes{kOutcomes.begin(), kOutcomes.end()};
  PropagationThresholds propagation;
  GeoConfig geo;
  std::vector<int> geo_intervals;  // empty = treatment start to four intervals past its end
  double weight_display_threshold = 1e-4;
  Outcome predictor_outcome = Outcome::avg_speed;  // the fit shown in predictors_report.csv

  /// Propagates the master seed into every seeded component.
  void apply_seed();
  /// Throws InputError on out-of-range values.
  void validate() const;
  /// Everything that affects outputs, as pretty-printed JSON.
  std::string to_json() const;
};

}  // namespace metroscm
