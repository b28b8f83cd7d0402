#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metroscm/data.hpp"
#include "metroscm/detect.hpp"
#include "metroscm/outcomes.hpp"

namespace metroscm {

// ------------------------------------------------------------ predictors

enum class Predictor : std::uint8_t {
  entry_ridership,
  exit_ridership,
  avg_journey_time,
  avg_speed,
  day_of_week,
  temperature,
  wind_speed,
  rain,
  concert,
  sports,
  exhibition,
  any_event,
};

std::string_view predictor_name(Predictor p);
/// Dummies enter unscaled; everything else is standardized.
bool is_dummy(Predictor p);

using PredictorSpec = std::vector<Predictor>;

/// All twelve predictors, minus the weather ones when the dataset has no weather.
PredictorSpec default_predictors(const Dataset& dataset);

/// Raw per-day predictor means over one window.
struct RawPredictors {
  PredictorSpec spec;
  Eigen::VectorXd treated;  // k
  Eigen::MatrixXd donors;   // k x J, column j = pool day j
};

struct PredictorMatrices {
  PredictorSpec spec;
  Eigen::VectorXd X1;     // k
  Eigen::MatrixXd X0;     // k x J
  Eigen::VectorXd scale;  // divisor applied to row h

  std::size_t k() const { return static_cast<std::size_t>(X1.size()); }
  std::size_t J() const { return static_cast<std::size_t>(X0.cols()); }
};

/// Means over `intervals` of every predictor, for the treated day and each pool day.
/// Missing cells are skipped; a predictor with no value on some day throws EstimationError.
RawPredictors collect_predictors(const OutcomePanel& panel, const Dataset& dataset, StationIndex station,
                                 Day treated_day, const std::vector<Day>& pool, const std::vector<int>& intervals,
                                 const PredictorSpec& spec);

/// Standardizes continuous rows by the sample SD over the chosen donor columns
/// (1 when that SD vanishes). `columns` selects, and may repeat, pool days.
PredictorMatrices standardize(const RawPredictors& raw, const std::vector<std::size_t>& columns);
PredictorMatrices standardize(const RawPredictors& raw);

PredictorMatrices build_predictors(const OutcomePanel& panel, const Dataset& dataset, StationIndex station,
                                   Day treated_day, const DonorPool& pool, const std::vector<int>& intervals,
                                   const PredictorSpec& spec);

// ------------------------------------------------------------ split

struct SplitConfig {
  int last_training = 0;  // training intervals 0..last_training
  int treatment_start = 1;  // validation intervals last_training+1 .. treatment_start-1

  std::vector<int> training() const;
  std::vector<int> validation() const;
  std::vector<int> pre_period() const;
  void validate() const;
};

/// Training gets floor(fraction * pre-period length) intervals.
SplitConfig make_split(int treatment_start, double training_fraction = 0.5);

// ------------------------------------------------------------ weights

struct InnerResult {
  Eigen::VectorXd weights;
  double objective = 0.0;
  double gap = 0.0;  // Frank-Wolfe duality gap at the returned weights
  int iterations = 0;
  bool converged = true;
};

/// min_c sum_h v_h (X1 - X0 c)_h^2 over the probability simplex.
InnerResult solve_inner(const Eigen::VectorXd& X1, const Eigen::MatrixXd& X0, const Eigen::VectorXd& v);
double inner_objective(const Eigen::VectorXd& X1, const Eigen::MatrixXd& X0, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& c);

struct OuterConfig {
  int starts = 20;                // uniform + (starts - 1) Dirichlet draws
  int max_evaluations = 400;      // per start
  double importance_floor = 1e-6;
  std::uint64_t seed = 20190311;
};

/// Outcome series on the validation window: treated (n) and donors (n x J).
struct OutcomeWindow {
  Eigen::VectorXd treated;
  Eigen::MatrixXd donors;
};

struct OuterResult {
  Eigen::VectorXd importance;      // v*
  Eigen::VectorXd training_weights;  // c~(v*) from the training predictors
  Eigen::VectorXd weights;         // c* from the validation predictors at v*
  double validation_mspe = 0.0;    // of c~(v*)
  double uniform_mspe = 0.0;       // of c~(uniform v)
  bool improved = false;           // some start beat uniform v
  int starts = 0;
  int evaluations = 0;
};

/// Steps (ii)-(iv): c~(v) on training predictors, v chosen to minimise the
/// validation MSPE of the outcome, c* recomputed from validation predictors.
OuterResult solve_outer(const PredictorMatrices& training, const PredictorMatrices& validation,
                        const OutcomeWindow& validation_outcome, const OuterConfig& config = {});

/// Importance vector from unconstrained coordinates.
Eigen::VectorXd importance_from(const Eigen::VectorXd& z, double floor);

// ------------------------------------------------------------ effects

struct Counterfactual {
  std::vector<double> values;
  std::size_t renormalized = 0;  // intervals where some weighted donor was missing
};

/// sum_j c_j Y_j(t) for each t, renormalising over donors present at t.
Counterfactual counterfactual(const Eigen::VectorXd& weights, const Eigen::MatrixXd& donor_series);
Counterfactual counterfactual(const Eigen::VectorXd& weights, const OutcomePanel& panel, Outcome outcome,
                              StationIndex station, const DonorPool& pool, int first_interval, int last_interval);

struct EffectSeries {
  int first_interval = 0;
  std::vector<double> observed;
  std::vector<double> counterfactual;
  std::vector<double> effect;
  std::vector<double> se;  // empty until bootstrapped

  int interval(std::size_t i) const { return first_interval + static_cast<int>(i); }
  std::size_t size() const { return effect.size(); }
};

EffectSeries effect(const std::vector<double>& observed, const std::vector<double>& counterfactual,
                    int first_interval = 0);
EffectSeries equal_weight_effect(const std::vector<double>& observed, const Eigen::MatrixXd& donor_series,
                                 int first_interval = 0);
/// Counterfactual is the mean of the treated day's own series before `treatment_start`.
EffectSeries before_after_effect(const std::vector<double>& full_day, int treatment_start);

/// Mean squared gap over the intervals where both values exist. Throws on an empty set.
double mspe(const std::vector<double>& observed, const std::vector<double>& synthetic);
double mspe(const Eigen::VectorXd& observed, const Eigen::VectorXd& synthetic);

/// Rows = intervals, columns = pool days.
Eigen::MatrixXd donor_matrix(const OutcomePanel& panel, Outcome outcome, StationIndex station,
                             const std::vector<Day>& pool, const std::vector<int>& intervals);
std::vector<double> treated_series(const OutcomePanel& panel, Outcome outcome, StationIndex station, Day day,
                                   const std::vector<int>& intervals);
std::vector<int> interval_range(int first, int last_inclusive);

// ------------------------------------------------------------ bootstrap

/// Maps a resample of donor indices (length J, drawn with replacement) to a
/// fixed-length vector of estimates.
using ResampleProcedure = std::function<std::vector<double>(const std::vector<std::size_t>&)>;

struct BootstrapConfig {
  int resamples = 1000;
  std::uint64_t seed = 20190311;
  unsigned workers = 1;
};

/// Donor indices of resample b; a function of (seed, b) only.
std::vector<std::size_t> bootstrap_draw(std::size_t J, std::uint64_t seed, int b);

/// Per-output sample standard deviation across resamples (NaN outputs skipped).
std::vector<double> bootstrap_se(const ResampleProcedure& procedure, std::size_t J, const BootstrapConfig& config);

// ------------------------------------------------------------ one station, one outcome

struct ScmConfig {
  double training_fraction = 0.5;
  OuterConfig outer;
  BootstrapConfig bootstrap;
  OuterConfig bootstrap_outer{4, 80, 1e-6, 20190311};  // refits inside each resample
  bool bootstrap_enabled = true;
};

/// Everything the fit needs, extracted once from the panel.
struct FitInputs {
  StationIndex station = 0;
  Outcome outcome = Outcome::entry_ridership;
  SplitConfig split;
  std::vector<Day> pool;
  RawPredictors training;
  RawPredictors validation;
  OutcomeWindow validation_outcome;
  std::vector<double> treated_full;   // all intervals of the treated day
  Eigen::MatrixXd donors_full;        // all intervals x J
};

FitInputs prepare_fit(const OutcomePanel& panel, const Dataset& dataset, StationIndex station, Outcome outcome,
                      Day treated_day, const SplitConfig& split, const DonorPool& pool, const PredictorSpec& spec);

struct FitResult {
  OuterResult outer;
  PredictorMatrices validation_predictors;
  std::size_t single_control = 0;  // pool index nearest the treated day under v*
  EffectSeries effects;            // t >= treatment start
  std::vector<double> pre_observed;
  std::vector<double> pre_synthetic;
  std::size_t renormalized = 0;
  double mspe_synthetic = 0.0;  // validation window
  double mspe_average = 0.0;
  double mspe_single = 0.0;
  double se_mspe_synthetic = kMissing;
  double se_mspe_average = kMissing;
  double se_mspe_single = kMissing;
};

/// Fit on the donor columns `columns` (indices into inputs.pool, repeats allowed).
FitResult fit_columns(const FitInputs& inputs, const std::vector<std::size_t>& columns, const OuterConfig& outer);

/// Full estimate with bootstrap standard errors for effects and MSPEs.
FitResult fit_station(const FitInputs& inputs, const ScmConfig& config);

}  // namespace metroscm
