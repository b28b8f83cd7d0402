#include "metroscm/scm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "metroscm/parallel.hpp"

namespace metroscm {

// ------------------------------------------------------------ predictors

std::string_view predictor_name(Predictor p) {
  switch (p) {
    case Predictor::entry_ridership: return "Entry ridership";
    case Predictor::exit_ridership: return "Exit ridership";
    case Predictor::avg_journey_time: return "Ave journey time (min)";
    case Predictor::avg_speed: return "Ave speed (km/h)";
    case Predictor::day_of_week: return "Day of week (dummy)";
    case Predictor::temperature: return "Temperature (C)";
    case Predictor::wind_speed: return "Wind (km/h)";
    case Predictor::rain: return "Rain (mm)";
    case Predictor::concert: return "Concert (dummy)";
    case Predictor::sports: return "Sports (dummy)";
    case Predictor::exhibition: return "Exhibition (dummy)";
    case Predictor::any_event: return "Mega-event (dummy)";
  }
  return "";
}

bool is_dummy(Predictor p) {
  switch (p) {
    case Predictor::day_of_week:
    case Predictor::concert:
    case Predictor::sports:
    case Predictor::exhibition:
    case Predictor::any_event: return true;
    default: return false;
  }
}

PredictorSpec default_predictors(const Dataset& ds) {
  PredictorSpec spec{Predictor::entry_ridership, Predictor::exit_ridership, Predictor::avg_journey_time,
                     Predictor::avg_speed, Predictor::day_of_week};
  if (!ds.weather.empty()) {
    spec.push_back(Predictor::temperature);
    spec.push_back(Predictor::wind_speed);
    spec.push_back(Predictor::rain);
  }
  spec.insert(spec.end(), {Predictor::concert, Predictor::sports, Predictor::exhibition, Predictor::any_event});
  return spec;
}

namespace {

std::optional<Outcome> outcome_of(Predictor p) {
  switch (p) {
    case Predictor::entry_ridership: return Outcome::entry_ridership;
    case Predictor::exit_ridership: return Outcome::exit_ridership;
    case Predictor::avg_journey_time: return Outcome::avg_journey_time;
    case Predictor::avg_speed: return Outcome::avg_speed;
    default: return std::nullopt;
  }
}

bool has_event(const Dataset& ds, Day d, std::optional<EventKind> kind) {
  return std::any_of(ds.events.begin(), ds.events.end(),
                     [&](const EventRecord& e) { return e.date == d && (!kind || e.kind == *kind); });
}

double predictor_mean(const OutcomePanel& panel, const Dataset& ds, StationIndex a, Day treated_day, Day d,
                      const std::vector<int>& intervals, Predictor p) {
  switch (p) {
    case Predictor::day_of_week: return weekday_index(d) == weekday_index(treated_day) ? 1.0 : 0.0;
    case Predictor::concert: return has_event(ds, d, EventKind::concert) ? 1.0 : 0.0;
    case Predictor::sports: return has_event(ds, d, EventKind::sports) ? 1.0 : 0.0;
    case Predictor::exhibition: return has_event(ds, d, EventKind::exhibition) ? 1.0 : 0.0;
    case Predictor::any_event: return has_event(ds, d, std::nullopt) ? 1.0 : 0.0;
    default: break;
  }
  double sum = 0.0;
  int n = 0;
  if (auto m = outcome_of(p)) {
    auto di = panel.day_index(d);
    if (!di) throw EstimationError(fmt::format("day {} is not in the outcome panel", format_date(d)));
    for (int t : intervals) {
      const double y = panel.at(*m, a, *di, t);
      if (is_missing(y)) continue;
      sum += y;
      ++n;
    }
  } else {
    for (int t : intervals) {
      auto w = ds.weather.at(d, t, ds.topology.grid);
      if (!w) continue;
      sum += p == Predictor::temperature ? w->temperature_c : p == Predictor::wind_speed ? w->wind_kmh : w->rain_mmh;
      ++n;
    }
  }
  if (n == 0)
    throw EstimationError(fmt::format("predictor '{}' has no data on {} at station {}", predictor_name(p),
                                      format_date(d), ds.topology.stations[a].id));
  return sum / n;
}

}  // namespace

RawPredictors collect_predictors(const OutcomePanel& panel, const Dataset& ds, StationIndex station, Day treated_day,
                                 const std::vector<Day>& pool, const std::vector<int>& intervals,
                                 const PredictorSpec& spec) {
  if (spec.empty()) throw std::invalid_argument("empty predictor spec");
  if (intervals.empty()) throw std::invalid_argument("empty predictor window");
  RawPredictors raw;
  raw.spec = spec;
  const auto k = static_cast<Eigen::Index>(spec.size());
  raw.treated.resize(k);
  raw.donors.resize(k, static_cast<Eigen::Index>(pool.size()));
  for (Eigen::Index h = 0; h < k; ++h) {
    raw.treated(h) = predictor_mean(panel, ds, station, treated_day, treated_day, intervals, spec[h]);
    for (std::size_t j = 0; j < pool.size(); ++j)
      raw.donors(h, static_cast<Eigen::Index>(j)) =
          predictor_mean(panel, ds, station, treated_day, pool[j], intervals, spec[h]);
  }
  return raw;
}

PredictorMatrices standardize(const RawPredictors& raw, const std::vector<std::size_t>& columns) {
  PredictorMatrices m;
  m.spec = raw.spec;
  const auto k = raw.treated.size();
  const auto J = static_cast<Eigen::Index>(columns.size());
  m.X0.resize(k, J);
  for (Eigen::Index j = 0; j < J; ++j) m.X0.col(j) = raw.donors.col(static_cast<Eigen::Index>(columns[j]));
  m.X1 = raw.treated;
  m.scale = Eigen::VectorXd::Ones(k);
  for (Eigen::Index h = 0; h < k; ++h) {
    if (is_dummy(raw.spec[h]) || J < 2) continue;
    const double mean = m.X0.row(h).mean();
    const double var = (m.X0.row(h).array() - mean).square().sum() / static_cast<double>(J - 1);
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) m.scale(h) = sd;
  }
  for (Eigen::Index h = 0; h < k; ++h) {
    m.X1(h) /= m.scale(h);
    m.X0.row(h) /= m.scale(h);
  }
  return m;
}

PredictorMatrices standardize(const RawPredictors& raw) {
  std::vector<std::size_t> all(static_cast<std::size_t>(raw.donors.cols()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return standardize(raw, all);
}

PredictorMatrices build_predictors(const OutcomePanel& panel, const Dataset& ds, StationIndex station,
                                   Day treated_day, const DonorPool& pool, const std::vector<int>& intervals,
                                   const PredictorSpec& spec) {
  return standardize(collect_predictors(panel, ds, station, treated_day, pool.days, intervals, spec));
}

// ------------------------------------------------------------ split

std::vector<int> interval_range(int first, int last_inclusive) {
  std::vector<int> out;
  for (int t = first; t <= last_inclusive; ++t) out.push_back(t);
  return out;
}

std::vector<int> SplitConfig::training() const { return interval_range(0, last_training); }
std::vector<int> SplitConfig::validation() const { return interval_range(last_training + 1, treatment_start - 1); }
std::vector<int> SplitConfig::pre_period() const { return interval_range(0, treatment_start - 1); }

void SplitConfig::validate() const {
  if (last_training < 0 || last_training + 1 > treatment_start - 1)
    throw EstimationError(fmt::format("invalid split: training 0..{}, treatment starts at {}", last_training,
                                      treatment_start));
}

SplitConfig make_split(int treatment_start, double training_fraction) {
  if (!(training_fraction > 0.0 && training_fraction < 1.0))
    throw std::invalid_argument("training fraction must lie in (0, 1)");
  const int pre = treatment_start;
  const int train = static_cast<int>(std::floor(training_fraction * pre));
  SplitConfig s{train - 1, treatment_start};
  s.validate();
  return s;
}

// ------------------------------------------------------------ inner problem

double inner_objective(const Eigen::VectorXd& X1, const Eigen::MatrixXd& X0, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& c) {
  return (v.array() * (X1 - X0 * c).array().square()).sum();
}

namespace {

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& y) {
  std::vector<double> u(y.data(), y.data() + y.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumulative += u[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] - candidate > 0.0) theta = candidate;
  }
  return (y.array() - theta).max(0.0);
}

Eigen::VectorXd clean_simplex(Eigen::VectorXd c) {
  c = c.cwiseMax(0.0);
  const double s = c.sum();
  if (!(s > 0.0)) return Eigen::VectorXd::Constant(c.size(), 1.0 / static_cast<double>(c.size()));
  return c / s;
}

double fw_gap(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  const Eigen::VectorXd g = 2.0 * (Q * c - b);
  return g.dot(c) - g.minCoeff();
}

}  // namespace

InnerResult solve_inner(const Eigen::VectorXd& X1, const Eigen::MatrixXd& X0, const Eigen::VectorXd& v) {
  const auto J = X0.cols();
  if (X0.rows() != X1.size() || v.size() != X1.size() || J == 0)
    throw std::invalid_argument("inconsistent shapes in weight problem");
  InnerResult res;
  if (J == 1) {
    res.weights = Eigen::VectorXd::Ones(1);
    res.objective = inner_objective(X1, X0, v, res.weights);
    return res;
  }

  const Eigen::VectorXd root = v.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd A = root.asDiagonal() * X0;
  const Eigen::VectorXd y = root.cwiseProduct(X1);
  const Eigen::MatrixXd Q = A.transpose() * A;
  const Eigen::VectorXd b = A.transpose() * y;
  const double scale = Q.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff() + std::numeric_limits<double>::min();
  const double tol = 1e-11 * scale;

  // Primal active set from the uniform point; fixed[j] means c_j is held at zero.
  Eigen::VectorXd c = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  std::vector<bool> fixed(static_cast<std::size_t>(J), false);
  const int max_iterations = 20 * static_cast<int>(J) + 50;
  bool optimal = false;
  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    std::vector<Eigen::Index> F;
    for (Eigen::Index j = 0; j < J; ++j)
      if (!fixed[static_cast<std::size_t>(j)]) F.push_back(j);
    const auto n = static_cast<Eigen::Index>(F.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 1, n + 1);
    Eigen::VectorXd rhs(n + 1);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index s = 0; s < n; ++s) K(r, s) = Q(F[r], F[s]);
      K(r, n) = 1.0;
      K(n, r) = 1.0;
      rhs(r) = b(F[r]);
    }
    rhs(n) = 1.0;
    const Eigen::VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);

    double step_norm = 0.0;
    Eigen::VectorXd p(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      p(r) = sol(r) - c(F[r]);
      step_norm = std::max(step_norm, std::abs(p(r)));
    }

    if (step_norm <= 1e-13) {
      const Eigen::VectorXd g = Q * c - b;
      double nu = 0.0;
      for (auto j : F) nu += g(j);
      nu /= static_cast<double>(n);
      Eigen::Index release = -1;
      double most_negative = -tol;
      for (Eigen::Index j = 0; j < J; ++j) {
        if (!fixed[static_cast<std::size_t>(j)]) continue;
        if (g(j) - nu < most_negative) {
          most_negative = g(j) - nu;
          release = j;
        }
      }
      if (release < 0) {
        optimal = true;
        break;
      }
      fixed[static_cast<std::size_t>(release)] = false;
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (p(r) >= 0.0) continue;
      const double ratio = c(F[r]) / -p(r);
      if (ratio < alpha) {
        alpha = ratio;
        blocking = F[r];
      }
    }
    for (Eigen::Index r = 0; r < n; ++r) c(F[r]) += alpha * p(r);
    if (blocking >= 0) {
      c(blocking) = 0.0;
      fixed[static_cast<std::size_t>(blocking)] = true;
    }
  }

  c = clean_simplex(c);
  double objective = inner_objective(X1, X0, v, c);
  double gap = fw_gap(Q, b, c);

  if (!optimal || gap > 1e-9 * objective + 1e-13 * scale) {
    // Accelerated projected gradient from the active-set point.
    const double L = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .maxCoeff() +
                     std::numeric_limits<double>::min();
    Eigen::VectorXd x = c, z = c;
    double t = 1.0;
    for (int it = 0; it < 50000 && gap > 1e-9 * objective + 1e-13 * scale; ++it) {
      const Eigen::VectorXd g = 2.0 * (Q * z - b);
      const Eigen::VectorXd next = project_simplex(z - g / L);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      z = next + ((t - 1.0) / t_next) * (next - x);
      x = next;
      t = t_next;
      if (it % 50 == 0) {
        const Eigen::VectorXd cand = clean_simplex(x);
        const double obj = inner_objective(X1, X0, v, cand);
        if (obj < objective) {
          c = cand;
          objective = obj;
        }
        gap = fw_gap(Q, b, c);
      }
      ++res.iterations;
    }
    res.converged = gap <= 1e-9 * objective + 1e-13 * scale;
  }

  // Never worse than the uniform point or any single donor.
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  if (const double u = inner_objective(X1, X0, v, uniform); u < objective) {
    c = uniform;
    objective = u;
  }
  for (Eigen::Index j = 0; j < J; ++j) {
    const double o = (v.array() * (X1 - X0.col(j)).array().square()).sum();
    if (o < objective) {
      c = Eigen::VectorXd::Unit(J, j);
      objective = o;
    }
  }
  res.weights = c;
  res.objective = objective;
  res.gap = fw_gap(Q, b, c);
  return res;
}

// ------------------------------------------------------------ outer problem

Eigen::VectorXd importance_from(const Eigen::VectorXd& z, double floor) {
  const auto k = z.size();
  const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  Eigen::VectorXd v = Eigen::VectorXd::Constant(k, floor) + (1.0 - static_cast<double>(k) * floor) * e / e.sum();
  return v / v.sum();
}

namespace {

double window_mspe(const OutcomeWindow& w, const Eigen::VectorXd& c) {
  const auto cf = counterfactual(c, w.donors);
  std::vector<double> obs(w.treated.data(), w.treated.data() + w.treated.size());
  return mspe(obs, cf.values);
}

struct NelderMead {
  std::function<double(const Eigen::VectorXd&)> f;
  int max_evaluations;
  int evaluations = 0;

  std::pair<Eigen::VectorXd, double> run(const Eigen::VectorXd& x0, double step) {
    const auto n = x0.size();
    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> vals(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)](i) += step;
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);

    std::vector<std::size_t> order(pts.size());
    while (evaluations < max_evaluations) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
      const auto best = order.front();
      const auto worst = order.back();
      const auto second = order[order.size() - 2];
      double size = 0.0;
      for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
      if (vals[worst] - vals[best] <= 1e-12 * (std::abs(vals[best]) + 1e-300) && size < 1e-6) break;
      if (size < 1e-9) break;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (std::size_t i = 0; i < pts.size(); ++i)
        if (i != worst) centroid += pts[i];
      centroid /= static_cast<double>(n);

      const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
      const double fr = eval(xr);
      if (fr < vals[best]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
        const double fe = eval(xe);
        if (fe < fr) {
          pts[worst] = xe;
          vals[worst] = fe;
        } else {
          pts[worst] = xr;
          vals[worst] = fr;
        }
        continue;
      }
      if (fr < vals[second]) {
        pts[worst] = xr;
        vals[worst] = fr;
        continue;
      }
      const bool outside = fr < vals[worst];
      const Eigen::VectorXd xc =
          outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid)) : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(xc);
      if (fc < (outside ? fr : vals[worst])) {
        pts[worst] = xc;
        vals[worst] = fc;
        continue;
      }
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i == best) continue;
        pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
        vals[i] = eval(pts[i]);
      }
    }
    const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    return {pts[best], vals[best]};
  }

  double eval(const Eigen::VectorXd& x) {
    ++evaluations;
    const double y = f(x);
    return std::isfinite(y) ? y : std::numeric_limits<double>::infinity();
  }
};

}  // namespace

OuterResult solve_outer(const PredictorMatrices& training, const PredictorMatrices& validation,
                        const OutcomeWindow& validation_outcome, const OuterConfig& config) {
  const auto k = static_cast<Eigen::Index>(training.k());
  if (training.J() < 2) throw EstimationError("at least two donor days are required");
  if (config.starts < 1) throw std::invalid_argument("outer search needs at least one start");
  if (config.importance_floor * static_cast<double>(k) >= 1.0)
    throw std::invalid_argument("importance floor too large for the number of predictors");

  auto objective = [&](const Eigen::VectorXd& z) {
    const auto v = importance_from(z, config.importance_floor);
    return window_mspe(validation_outcome, solve_inner(training.X1, training.X0, v).weights);
  };

  OuterResult out;
  Eigen::VectorXd best_z = Eigen::VectorXd::Zero(k);
  out.uniform_mspe = objective(best_z);
  double best = out.uniform_mspe;
  out.evaluations = 1;

  std::mt19937_64 rng(config.seed);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int s = 0; s < config.starts; ++s) {
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(k);
    if (s > 0) {
      Eigen::VectorXd draw(k);
      for (Eigen::Index h = 0; h < k; ++h) draw(h) = gamma(rng);
      draw /= draw.sum();
      z0 = draw.cwiseMax(1e-12).array().log();
    }
    if (k == 1) break;
    NelderMead nm{objective, config.max_evaluations};
    auto [z, value] = nm.run(z0, 1.0);
    out.evaluations += nm.evaluations;
    ++out.starts;
    if (value < best) {
      best = value;
      best_z = z;
    }
  }
  out.importance = importance_from(best_z, config.importance_floor);
  out.validation_mspe = best;
  out.improved = best < out.uniform_mspe;
  out.training_weights = solve_inner(training.X1, training.X0, out.importance).weights;
  out.weights = solve_inner(validation.X1, validation.X0, out.importance).weights;
  return out;
}

// ------------------------------------------------------------ effects

Counterfactual counterfactual(const Eigen::VectorXd& weights, const Eigen::MatrixXd& donor_series) {
  if (weights.size() != donor_series.cols()) throw std::invalid_argument("weights do not match donor count");
  Counterfactual cf;
  cf.values.resize(static_cast<std::size_t>(donor_series.rows()));
  for (Eigen::Index t = 0; t < donor_series.rows(); ++t) {
    double sum = 0.0;
    double present = 0.0;
    bool missing_weighted = false;
    for (Eigen::Index j = 0; j < donor_series.cols(); ++j) {
      const double y = donor_series(t, j);
      if (is_missing(y)) {
        if (weights(j) > 0.0) missing_weighted = true;
        continue;
      }
      sum += weights(j) * y;
      present += weights(j);
    }
    if (!missing_weighted) {
      cf.values[static_cast<std::size_t>(t)] = sum;
    } else {
      ++cf.renormalized;
      cf.values[static_cast<std::size_t>(t)] = present > 0.0 ? sum / present : kMissing;
    }
  }
  return cf;
}

Eigen::MatrixXd donor_matrix(const OutcomePanel& panel, Outcome outcome, StationIndex station,
                             const std::vector<Day>& pool, const std::vector<int>& intervals) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(intervals.size()), static_cast<Eigen::Index>(pool.size()));
  for (std::size_t j = 0; j < pool.size(); ++j) {
    auto di = panel.day_index(pool[j]);
    if (!di) throw EstimationError(fmt::format("donor day {} is not in the outcome panel", format_date(pool[j])));
    for (std::size_t i = 0; i < intervals.size(); ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = panel.at(outcome, station, *di, intervals[i]);
  }
  return m;
}

std::vector<double> treated_series(const OutcomePanel& panel, Outcome outcome, StationIndex station, Day day,
                                   const std::vector<int>& intervals) {
  auto di = panel.day_index(day);
  if (!di) throw EstimationError(fmt::format("day {} is not in the outcome panel", format_date(day)));
  std::vector<double> out;
  out.reserve(intervals.size());
  for (int t : intervals) out.push_back(panel.at(outcome, station, *di, t));
  return out;
}

Counterfactual counterfactual(const Eigen::VectorXd& weights, const OutcomePanel& panel, Outcome outcome,
                              StationIndex station, const DonorPool& pool, int first_interval, int last_interval) {
  return counterfactual(weights,
                        donor_matrix(panel, outcome, station, pool.days, interval_range(first_interval, last_interval)));
}

EffectSeries effect(const std::vector<double>& observed, const std::vector<double>& cf, int first_interval) {
  if (observed.size() != cf.size()) throw std::invalid_argument("observed and counterfactual lengths differ");
  EffectSeries e;
  e.first_interval = first_interval;
  e.observed = observed;
  e.counterfactual = cf;
  e.effect.resize(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) e.effect[i] = observed[i] - cf[i];
  return e;
}

EffectSeries equal_weight_effect(const std::vector<double>& observed, const Eigen::MatrixXd& donor_series,
                                 int first_interval) {
  const auto J = donor_series.cols();
  if (J < 1) throw EstimationError("equal-weight baseline needs at least one donor day");
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  return effect(observed, counterfactual(uniform, donor_series).values, first_interval);
}

EffectSeries before_after_effect(const std::vector<double>& full_day, int treatment_start) {
  if (treatment_start < 1 || treatment_start > static_cast<int>(full_day.size()))
    throw EstimationError("before-after comparison needs at least one pre-treatment interval");
  double sum = 0.0;
  int n = 0;
  for (int t = 0; t < treatment_start; ++t) {
    if (is_missing(full_day[static_cast<std::size_t>(t)])) continue;
    sum += full_day[static_cast<std::size_t>(t)];
    ++n;
  }
  if (n == 0) throw EstimationError("no observed pre-treatment values");
  const double mean = sum / n;
  std::vector<double> post(full_day.begin() + treatment_start, full_day.end());
  return effect(post, std::vector<double>(post.size(), mean), treatment_start);
}

double mspe(const std::vector<double>& observed, const std::vector<double>& synthetic) {
  if (observed.size() != synthetic.size()) throw std::invalid_argument("series lengths differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (is_missing(observed[i]) || is_missing(synthetic[i])) continue;
    const double d = observed[i] - synthetic[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw EstimationError("no intervals to evaluate the prediction error on");
  return sum / static_cast<double>(n);
}

double mspe(const Eigen::VectorXd& observed, const Eigen::VectorXd& synthetic) {
  return mspe(std::vector<double>(observed.data(), observed.data() + observed.size()),
              std::vector<double>(synthetic.data(), synthetic.data() + synthetic.size()));
}

// ------------------------------------------------------------ bootstrap

std::vector<std::size_t> bootstrap_draw(std::size_t J, std::uint64_t seed, int b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(b), 0x9e3779b9u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, J - 1);
  std::vector<std::size_t> draw(J);
  for (auto& d : draw) d = pick(rng);
  return draw;
}

std::vector<double> bootstrap_se(const ResampleProcedure& procedure, std::size_t J, const BootstrapConfig& config) {
  if (config.resamples < 2) throw std::invalid_argument("bootstrap needs at least two resamples");
  if (J < 1) throw std::invalid_argument("bootstrap needs donor days");
  const auto B = static_cast<std::size_t>(config.resamples);
  std::vector<std::vector<double>> results(B);
  parallel_for(B, config.workers,
               [&](std::size_t b) { results[b] = procedure(bootstrap_draw(J, config.seed, static_cast<int>(b))); });

  const std::size_t outputs = results.front().size();
  std::vector<double> se(outputs, kMissing);
  for (std::size_t o = 0; o < outputs; ++o) {
    std::vector<double> xs;
    xs.reserve(B);
    for (const auto& r : results) {
      if (r.size() != outputs) throw std::logic_error("resample procedure returned a different length");
      if (!is_missing(r[o])) xs.push_back(r[o]);
    }
    if (xs.size() < 2) continue;
    // Shift by the first value so identical draws give exactly zero.
    const double origin = xs.front();
    double mean = 0.0;
    for (double x : xs) mean += x - origin;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - origin - mean) * (x - origin - mean);
    se[o] = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return se;
}

// ------------------------------------------------------------ one station, one outcome

FitInputs prepare_fit(const OutcomePanel& panel, const Dataset& ds, StationIndex station, Outcome outcome,
                      Day treated_day, const SplitConfig& split, const DonorPool& pool, const PredictorSpec& spec) {
  split.validate();
  if (pool.size() < 2) throw EstimationError("at least two donor days are required");
  FitInputs in;
  in.station = station;
  in.outcome = outcome;
  in.split = split;
  in.pool = pool.days;
  in.training = collect_predictors(panel, ds, station, treated_day, pool.days, split.training(), spec);
  in.validation = collect_predictors(panel, ds, station, treated_day, pool.days, split.validation(), spec);
  const auto val = split.validation();
  const auto val_treated = treated_series(panel, outcome, station, treated_day, val);
  in.validation_outcome.treated = Eigen::Map<const Eigen::VectorXd>(val_treated.data(),
                                                                    static_cast<Eigen::Index>(val_treated.size()));
  in.validation_outcome.donors = donor_matrix(panel, outcome, station, pool.days, val);
  const auto all = interval_range(0, panel.interval_count() - 1);
  in.treated_full = treated_series(panel, outcome, station, treated_day, all);
  in.donors_full = donor_matrix(panel, outcome, station, pool.days, all);
  return in;
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& columns) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(columns[j]));
  return out;
}

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

FitResult fit_columns(const FitInputs& in, const std::vector<std::size_t>& columns, const OuterConfig& outer) {
  const auto training = standardize(in.training, columns);
  const auto validation = standardize(in.validation, columns);
  OutcomeWindow window{in.validation_outcome.treated, select_columns(in.validation_outcome.donors, columns)};

  FitResult r;
  r.outer = solve_outer(training, validation, window, outer);
  r.validation_predictors = validation;

  const Eigen::VectorXd& c = r.outer.weights;
  const auto& v = r.outer.importance;
  double nearest = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < validation.X0.cols(); ++j) {
    const double d = (v.array() * (validation.X1 - validation.X0.col(j)).array().square()).sum();
    if (d < nearest) {
      nearest = d;
      r.single_control = static_cast<std::size_t>(j);
    }
  }

  const auto J = static_cast<Eigen::Index>(columns.size());
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  const auto obs_val = as_vector(window.treated);
  r.mspe_synthetic = mspe(obs_val, counterfactual(c, window.donors).values);
  r.mspe_average = mspe(obs_val, counterfactual(uniform, window.donors).values);
  r.mspe_single = mspe(obs_val, counterfactual(Eigen::VectorXd::Unit(J, static_cast<Eigen::Index>(r.single_control)),
                                               window.donors)
                                    .values);

  const auto donors = select_columns(in.donors_full, columns);
  const auto cf = counterfactual(c, donors);
  r.renormalized = cf.renormalized;
  const auto T_IS = static_cast<std::size_t>(in.split.treatment_start);
  r.pre_observed.assign(in.treated_full.begin(), in.treated_full.begin() + static_cast<std::ptrdiff_t>(T_IS));
  r.pre_synthetic.assign(cf.values.begin(), cf.values.begin() + static_cast<std::ptrdiff_t>(T_IS));
  r.effects = effect(std::vector<double>(in.treated_full.begin() + static_cast<std::ptrdiff_t>(T_IS),
                                         in.treated_full.end()),
                     std::vector<double>(cf.values.begin() + static_cast<std::ptrdiff_t>(T_IS), cf.values.end()),
                     in.split.treatment_start);
  return r;
}

FitResult fit_station(const FitInputs& in, const ScmConfig& config) {
  std::vector<std::size_t> all(in.pool.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  FitResult r = fit_columns(in, all, config.outer);
  if (!config.bootstrap_enabled) return r;

  const std::size_t post = r.effects.size();
  ResampleProcedure procedure = [&](const std::vector<std::size_t>& cols) {
    std::vector<double> out(post + 3, kMissing);
    try {
      const auto f = fit_columns(in, cols, config.bootstrap_outer);
      std::copy(f.effects.effect.begin(), f.effects.effect.end(), out.begin());
      out[post] = f.mspe_synthetic;
      out[post + 1] = f.mspe_average;
      out[post + 2] = f.mspe_single;
    } catch (const EstimationError&) {
    }
    return out;
  };
  const auto se = bootstrap_se(procedure, in.pool.size(), config.bootstrap);
  r.effects.se.assign(se.begin(), se.begin() + static_cast<std::ptrdiff_t>(post));
  r.se_mspe_synthetic = se[post];
  r.se_mspe_average = se[post + 1];
  r.se_mspe_single = se[post + 2];
  return r;
}

}  // namespace metroscm
