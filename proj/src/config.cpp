#include "metroscm/config.hpp"

#include <fmt/format.h>

#include "json.hpp"

namespace metroscm {

void Config::apply_seed() {
  scm.outer.seed = seed;
  scm.bootstrap.seed = seed;
  scm.bootstrap_outer.seed = seed;
}

void Config::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("config: " + msg); };
  if (workers < 1) fail("workers must be at least 1");
  if (detect.headway_multiplier <= 1.0) fail("headway multiplier must exceed 1");
  if (detect.min_duration.count() < 0) fail("min duration must be non-negative");
  if (!(scm.training_fraction > 0.0 && scm.training_fraction < 1.0)) fail("training fraction must lie in (0, 1)");
  if (scm.bootstrap_enabled && scm.bootstrap.resamples < 2) fail("bootstrap needs at least 2 resamples");
  for (const auto* outer : {&scm.outer, &scm.bootstrap_outer}) {
    if (outer->starts < 1) fail("multi-start count must be at least 1");
    if (outer->max_evaluations < 1) fail("evaluation budget must be at least 1");
    if (!(outer->importance_floor >= 0.0 && outer->importance_floor < 0.05)) fail("importance floor must lie in [0, 0.05)");
  }
  if (outcomes.empty()) fail("no outcomes selected");
  if (propagation.se_multiplier < 0.0 || propagation.absolute_floor < 0.0) fail("negative propagation threshold");
  if (propagation.run_length < 1) fail("run length must be at least 1");
  if (geo.labels.size() != geo.quantiles.size() + 1) fail("need one more severity label than quantiles");
  for (double q : geo.quantiles)
    if (!(q >= 0.0 && q <= 1.0)) fail("severity quantiles must lie in [0, 1]");
  if (weight_display_threshold < 0.0) fail("weight display threshold must be non-negative");
}

std::string Config::to_json() const {
  using nlohmann::json;
  auto outer_json = [](const OuterConfig& o) {
    return json{{"starts", o.starts},
                {"max_evaluations", o.max_evaluations},
                {"importance_floor", o.importance_floor},
                {"seed", o.seed}};
  };
  json doc;
  doc["seed"] = seed;
  doc["detect"] = {{"headway_multiplier", detect.headway_multiplier},
                   {"min_duration_s", detect.min_duration.count()}};
  doc["scm"] = {{"training_fraction", scm.training_fraction},
                {"outer", outer_json(scm.outer)},
                {"bootstrap", {{"enabled", scm.bootstrap_enabled},
                               {"resamples", scm.bootstrap.resamples},
                               {"seed", scm.bootstrap.seed},
                               {"outer", outer_json(scm.bootstrap_outer)}}}};
  doc["outcomes"] = json::array();
  for (auto m : outcomes) doc["outcomes"].push_back(std::string(outcome_name(m)));
  doc["propagation"] = {{"se_multiplier", propagation.se_multiplier},
                        {"absolute_floor", propagation.absolute_floor},
                        {"run_length", propagation.run_length}};
  doc["geo"] = {{"quantiles", geo.quantiles}, {"labels", geo.labels}, {"intervals", geo_intervals}};
  doc["weight_display_threshold"] = weight_display_threshold;
  doc["predictor_outcome"] = std::string(outcome_name(predictor_outcome));
  return doc.dump(2);
}

}  // namespace metroscm
