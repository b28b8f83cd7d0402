#include <gtest/gtest.h>

#include <random>

#include "metroscm/scm.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace metroscm;

namespace {

void expect_simplex(const Eigen::VectorXd& x) {
  EXPECT_LE(oracles::simplex_violation(x), 1e-10) << x.transpose();
}

Eigen::MatrixXd columns(std::initializer_list<std::vector<double>> cols) {
  const auto rows = static_cast<Eigen::Index>(cols.begin()->size());
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(cols.size()));
  Eigen::Index j = 0;
  for (const auto& c : cols) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = c[static_cast<std::size_t>(i)];
    ++j;
  }
  return m;
}

// A two-day dataset on a three-station line; the panel holds known values.
struct PanelFixture {
  Dataset ds;
  OutcomePanel panel;
  Day monday = parse_date("2019-03-11");
  Day next_monday = parse_date("2019-03-18");
  Day tuesday = parse_date("2019-03-12");

  PanelFixture() {
    ds.topology = testing_support::line_topology({1.0, 1.0});
    std::vector<WeatherRecord> hourly;
    for (Day d : {monday, tuesday, next_monday})
      for (int h = 6; h < 24; ++h)
        hourly.push_back({Timestamp{d} + std::chrono::hours{h}, {18.0 + h * 0.5, 10.0, d == tuesday ? 2.0 : 0.0}});
    ds.weather = WeatherTable(hourly);
    ds.events = {{tuesday, EventKind::concert}};
    panel = OutcomePanel(3, {monday, tuesday, next_monday}, 72);
    for (std::size_t d = 0; d < 3; ++d)
      for (StationIndex a = 0; a < 3; ++a)
        for (int t = 0; t < 72; ++t) {
          const double base = d == 1 ? 2.0 : 1.0;
          panel.at(Outcome::entry_ridership, a, d, t) = base * (10 + t);
          panel.at(Outcome::exit_ridership, a, d, t) = base * (5 + a);
          panel.at(Outcome::avg_journey_time, a, d, t) = 12.0 + 0.1 * t;
          panel.at(Outcome::avg_speed, a, d, t) = (t % 2 == 0) ? 30.0 : kMissing;
          panel.at(Outcome::crowding_density, a, d, t) = 0.0;
        }
  }
};

}  // namespace

// ------------------------------------------------------------ predictors

TEST(ScmPredictors, IdenticalSingleDonorGivesIdenticalColumn) {
  PanelFixture f;
  const auto spec = default_predictors(f.ds);
  const auto p = build_predictors(f.panel, f.ds, 1, f.monday, DonorPool{{f.next_monday}}, interval_range(0, 20), spec);
  ASSERT_EQ(p.J(), 1u);
  for (std::size_t h = 0; h < p.k(); ++h)
    EXPECT_EQ(p.X0(static_cast<Eigen::Index>(h), 0), p.X1[static_cast<Eigen::Index>(h)]) << predictor_name(spec[h]);
}

TEST(ScmPredictors, DayOfWeekDummy) {
  PanelFixture f;
  const auto raw = collect_predictors(f.panel, f.ds, 0, f.monday, {f.tuesday, f.next_monday}, interval_range(0, 3),
                                      {Predictor::day_of_week, Predictor::concert, Predictor::any_event});
  EXPECT_EQ(raw.treated[0], 1.0);
  EXPECT_EQ(raw.donors(0, 0), 0.0);
  EXPECT_EQ(raw.donors(0, 1), 1.0);
  EXPECT_EQ(raw.donors(1, 0), 1.0);
  EXPECT_EQ(raw.donors(1, 1), 0.0);
  EXPECT_EQ(raw.donors(2, 0), 1.0);
  EXPECT_EQ(raw.treated[1], 0.0);
}

TEST(ScmPredictors, MeansOverWindowSkipMissingCells) {
  PanelFixture f;
  const std::vector<int> window{4, 5, 6, 7};
  const auto raw = collect_predictors(f.panel, f.ds, 2, f.monday, {f.tuesday}, window,
                                      {Predictor::entry_ridership, Predictor::exit_ridership,
                                       Predictor::avg_journey_time, Predictor::avg_speed, Predictor::temperature,
                                       Predictor::rain});
  EXPECT_DOUBLE_EQ(raw.treated[0], (14 + 15 + 16 + 17) / 4.0);
  EXPECT_DOUBLE_EQ(raw.donors(0, 0), 2.0 * (14 + 15 + 16 + 17) / 4.0);
  EXPECT_DOUBLE_EQ(raw.treated[1], 7.0);
  EXPECT_DOUBLE_EQ(raw.treated[2], 12.0 + 0.1 * (4 + 5 + 6 + 7) / 4.0);
  EXPECT_DOUBLE_EQ(raw.treated[3], 30.0);
  // Intervals 4-7 lie in 07:00-08:00.
  EXPECT_DOUBLE_EQ(raw.treated[4], 18.0 + 7 * 0.5);
  EXPECT_DOUBLE_EQ(raw.donors(5, 0), 2.0);
}

TEST(ScmPredictors, StandardizationUsesDonorSd) {
  RawPredictors raw;
  raw.spec = {Predictor::entry_ridership, Predictor::concert};
  raw.treated = Eigen::Vector2d(5.0, 1.0);
  raw.donors = columns({{2.0, 1.0}, {4.0, 0.0}, {6.0, 1.0}});
  const auto m = standardize(raw);
  EXPECT_DOUBLE_EQ(m.scale[0], 2.0);
  EXPECT_DOUBLE_EQ(m.scale[1], 1.0);
  EXPECT_DOUBLE_EQ(m.X1[0], 2.5);
  EXPECT_DOUBLE_EQ(m.X0(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(m.X0(1, 1), 0.0);
}

TEST(ScmPredictors, MissingPredictorIsAnError) {
  PanelFixture f;
  for (int t = 0; t < 72; ++t) f.panel.at(Outcome::avg_speed, 1, 1, t) = kMissing;
  EXPECT_THROW(collect_predictors(f.panel, f.ds, 1, f.monday, {f.tuesday}, interval_range(0, 5),
                                  {Predictor::avg_speed}),
               EstimationError);
}

TEST(ScmSplit, TrainingAndValidationAreDisjointAndPrecedeTreatment) {
  for (int tis = 3; tis < 72; ++tis) {
    const auto s = make_split(tis, 0.5);
    s.validate();
    const auto tr = s.training();
    const auto va = s.validation();
    ASSERT_FALSE(tr.empty());
    ASSERT_FALSE(va.empty());
    EXPECT_EQ(tr.back() + 1, va.front());
    EXPECT_EQ(va.back(), tis - 1);
  }
  EXPECT_THROW(make_split(1, 0.5).validate(), EstimationError);
}

// ------------------------------------------------------------ inner problem

TEST(ScmInner, SingleDonor) {
  const auto r = solve_inner(Eigen::Vector2d(1.0, 2.0), columns({{3.0, 4.0}}), Eigen::Vector2d(0.5, 0.5));
  ASSERT_EQ(r.weights.size(), 1);
  EXPECT_EQ(r.weights[0], 1.0);
}

TEST(ScmInner, ExactMatchDonorIsRecovered) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    auto in = oracles::random_instance(rng, 6, 5);
    in.X1 = in.X0.col(2);
    const auto r = solve_inner(in.X1, in.X0, in.v);
    expect_simplex(r.weights);
    EXPECT_GE(r.weights[2], 0.999);
    for (Eigen::Index j = 0; j < 5; ++j)
      if (j != 2) EXPECT_LT(r.weights[j], 1e-6);
  }
}

TEST(ScmInner, MatchesSimplexGridSearch) {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const auto k = static_cast<Eigen::Index>(1 + rng() % 6);
    const auto in = oracles::random_instance(rng, k, 3);
    const auto r = solve_inner(in.X1, in.X0, in.v);
    expect_simplex(r.weights);
    const double grid = oracles::grid_minimum(in, 1e-3);
    EXPECT_LE(r.objective, grid + 1e-12);
    EXPECT_NEAR(r.objective, grid, 1e-5);
    EXPECT_NEAR(r.objective, inner_objective(in.X1, in.X0, in.v, r.weights), 1e-12);
  }
}

TEST(ScmInner, DominatesUniformAndVertices) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 200; ++rep) {
    const auto k = static_cast<Eigen::Index>(1 + rng() % 8);
    const auto J = static_cast<Eigen::Index>(2 + rng() % 12);
    const auto in = oracles::random_instance(rng, k, J);
    const auto r = solve_inner(in.X1, in.X0, in.v);
    expect_simplex(r.weights);
    const double tol = 1e-10 * std::max(1.0, r.objective);
    EXPECT_LE(r.objective, inner_objective(in.X1, in.X0, in.v, Eigen::VectorXd::Constant(J, 1.0 / J)) + tol);
    for (Eigen::Index j = 0; j < J; ++j)
      EXPECT_LE(r.objective, inner_objective(in.X1, in.X0, in.v, Eigen::VectorXd::Unit(J, j)) + tol);
    // Convex combinations stay inside the donor range of every predictor.
    const Eigen::VectorXd fit = in.X0 * r.weights;
    for (Eigen::Index h = 0; h < k; ++h) {
      EXPECT_GE(fit[h], in.X0.row(h).minCoeff() - 1e-12);
      EXPECT_LE(fit[h], in.X0.row(h).maxCoeff() + 1e-12);
    }
  }
}

TEST(ScmInner, DeterministicGivenInputs) {
  std::mt19937_64 rng(5);
  const auto in = oracles::random_instance(rng, 5, 9);
  const auto a = solve_inner(in.X1, in.X0, in.v);
  const auto b = solve_inner(in.X1, in.X0, in.v);
  EXPECT_EQ(a.weights, b.weights);
}

// ------------------------------------------------------------ outer problem

TEST(ScmOuter, IdenticalDonorGivesZeroValidationMspe) {
  std::mt19937_64 rng(11);
  auto in = oracles::toy_fit(rng, 5, 30, 10, 24);
  // Donor 3 equals the treated day everywhere before treatment.
  for (int t = 0; t < 24; ++t) in.donors_full(t, 3) = in.treated_full[static_cast<std::size_t>(t)];
  in.training.donors.col(3) = in.training.treated;
  in.validation.donors.col(3) = in.validation.treated;
  in.validation_outcome.donors.col(3) = in.validation_outcome.treated;
  const auto r = fit_columns(in, {0, 1, 2, 3, 4}, OuterConfig{});
  EXPECT_NEAR(r.outer.validation_mspe, 0.0, 1e-10);
  EXPECT_NEAR(r.mspe_synthetic, 0.0, 1e-10);
  EXPECT_GE(r.outer.weights[3], 0.999);
  expect_simplex(r.outer.weights);
  expect_simplex(r.outer.importance);
}

TEST(ScmOuter, NoisePredictorGetsLessImportance) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::Index J = 6, n = 8;
  Eigen::VectorXd level(J);
  for (Eigen::Index j = 0; j < J; ++j) level[j] = 2.0 * static_cast<double>(j);
  const double treated_level = 0.4 * level[1] + 0.6 * level[4];
  PredictorMatrices tr;
  tr.spec = {Predictor::temperature, Predictor::entry_ridership};
  tr.X1 = Eigen::Vector2d(z(rng), treated_level);
  tr.X0.resize(2, J);
  for (Eigen::Index j = 0; j < J; ++j) {
    tr.X0(0, j) = z(rng);
    tr.X0(1, j) = level[j];
  }
  tr.scale = Eigen::Vector2d::Ones();
  OutcomeWindow window{Eigen::VectorXd(n), Eigen::MatrixXd(n, J)};
  for (Eigen::Index t = 0; t < n; ++t) {
    const double shape = std::cos(0.5 * static_cast<double>(t));
    window.treated[t] = treated_level + shape;
    for (Eigen::Index j = 0; j < J; ++j) window.donors(t, j) = level[j] + shape;
  }
  const auto r = solve_outer(tr, tr, window);
  expect_simplex(r.importance);
  EXPECT_LT(r.importance[0], r.importance[1]);

  // One-dimensional scan of v = (s, 1 - s).
  double best_s = 0.0, best = std::numeric_limits<double>::infinity();
  for (int i = 1; i < 1000; ++i) {
    const double s = i / 1000.0;
    const auto c = solve_inner(tr.X1, tr.X0, Eigen::Vector2d(s, 1.0 - s)).weights;
    const double m = mspe(window.treated, window.donors * c);
    if (m < best) {
      best = m;
      best_s = s;
    }
  }
  EXPECT_LT(best_s, 0.5);
  EXPECT_LE(r.validation_mspe, best + 1e-9);
}

TEST(ScmOuter, NeverWorseThanUniformImportance) {
  std::mt19937_64 rng(33);
  for (int rep = 0; rep < 25; ++rep) {
    const auto J = static_cast<std::size_t>(2 + rng() % 8);
    const auto in = oracles::toy_fit(rng, J, 24, 7, 16, 1.5);
    std::vector<std::size_t> all(J);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto r = fit_columns(in, all, OuterConfig{6, 150, 1e-6, 7});
    EXPECT_LE(r.outer.validation_mspe, r.outer.uniform_mspe);
    expect_simplex(r.outer.weights);
    expect_simplex(r.outer.training_weights);
    expect_simplex(r.outer.importance);
    EXPECT_GE(r.outer.importance.minCoeff(), 1e-6 * (1 - 1e-9));
  }
}

TEST(ScmOuter, ImportanceMapLandsOnSimplex) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 20.0);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd x(1 + rng() % 12);
    for (auto& v : x) v = z(rng);
    const auto v = importance_from(x, 1e-6);
    expect_simplex(v);
    EXPECT_GE(v.minCoeff(), 1e-6 * (1 - 1e-9));
  }
}

// ------------------------------------------------------------ effects

TEST(ScmEffects, CounterfactualExamples) {
  const auto donors = columns({{1.0, 2.0, 3.0}, {5.0, 7.0, 9.0}, {0.0, 0.0, 6.0}});
  EXPECT_EQ(counterfactual(Eigen::Vector3d(1.0, 0.0, 0.0), donors).values, (std::vector<double>{1.0, 2.0, 3.0}));
  const auto uniform = counterfactual(Eigen::Vector3d::Constant(1.0 / 3.0), donors).values;
  EXPECT_DOUBLE_EQ(uniform[0], 2.0);
  EXPECT_DOUBLE_EQ(uniform[2], 6.0);
  const Eigen::Vector3d c(0.2, 0.5, 0.3);
  const auto cf = counterfactual(c, donors).values;
  for (int t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(cf[t], 0.2 * donors(t, 0) + 0.5 * donors(t, 1) + 0.3 * donors(t, 2));
}

TEST(ScmEffects, MissingDonorCellsAreRenormalized) {
  auto donors = columns({{1.0, 2.0}, {5.0, 7.0}, {3.0, kMissing}});
  const auto cf = counterfactual(Eigen::Vector3d(0.5, 0.25, 0.25), donors);
  EXPECT_DOUBLE_EQ(cf.values[0], 0.5 * 1 + 0.25 * 5 + 0.25 * 3);
  EXPECT_DOUBLE_EQ(cf.values[1], (0.5 * 2 + 0.25 * 7) / 0.75);
  EXPECT_EQ(cf.renormalized, 1u);
}

TEST(ScmEffects, EffectArithmetic) {
  const std::vector<double> y{3.0, 4.0, 5.0};
  const auto same = effect(y, y, 47);
  EXPECT_EQ(same.effect, (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(same.interval(2), 49);
  const auto plus = effect({8.0, 9.0, 10.0}, y);
  EXPECT_EQ(plus.effect, (std::vector<double>{5.0, 5.0, 5.0}));
}

TEST(ScmEffects, EffectIsLinearInShift) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 5.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> y(10), yhat(10), shifted(10);
    const double delta = z(rng);
    for (int i = 0; i < 10; ++i) {
      y[i] = z(rng);
      yhat[i] = z(rng);
      shifted[i] = y[i] + delta;
    }
    const auto a = effect(y, yhat).effect;
    const auto b = effect(shifted, yhat).effect;
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(b[i], a[i] + delta, 1e-12);
  }
}

TEST(ScmEffects, EqualWeightBaseline) {
  EXPECT_EQ(equal_weight_effect({4.0, 6.0}, columns({{1.0, 2.0}})).effect, (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(equal_weight_effect({4.0, 6.0}, columns({{3.0, 4.0}, {5.0, 8.0}})).effect,
            (std::vector<double>{0.0, 0.0}));
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd donors(6, 4);
  std::vector<double> y(6);
  for (int t = 0; t < 6; ++t) {
    y[t] = z(rng);
    for (int j = 0; j < 4; ++j) donors(t, j) = z(rng);
  }
  const auto e = equal_weight_effect(y, donors);
  const auto uniform = counterfactual(Eigen::Vector4d::Constant(0.25), donors).values;
  for (int t = 0; t < 6; ++t) {
    const double mean = (donors(t, 0) + donors(t, 1) + donors(t, 2) + donors(t, 3)) / 4.0;
    EXPECT_NEAR(e.effect[t], y[t] - mean, 1e-12);
    EXPECT_EQ(e.counterfactual[t], uniform[t]);
  }
}

TEST(ScmEffects, BeforeAfterBaseline) {
  EXPECT_EQ(before_after_effect({2.0, 2.0, 2.0, 2.0}, 2).effect, (std::vector<double>{0.0, 0.0}));
  const auto e = before_after_effect({8.0, 12.0, 10.0, 4.0}, 3);
  EXPECT_EQ(e.first_interval, 3);
  ASSERT_EQ(e.effect.size(), 1u);
  EXPECT_DOUBLE_EQ(e.effect[0], -6.0);
  const auto f = before_after_effect({1.0, 2.0, 6.0, 3.0, 9.0}, 3);
  EXPECT_DOUBLE_EQ(f.counterfactual[0], 3.0);
  EXPECT_DOUBLE_EQ(f.effect[1], 6.0);
}

TEST(ScmEffects, Mspe) {
  EXPECT_EQ(mspe(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}), 0.0);
  EXPECT_EQ(mspe(std::vector<double>{3.0, 4.0, 5.0}, std::vector<double>{1.0, 2.0, 3.0}), 4.0);
  EXPECT_EQ(mspe(std::vector<double>{3.0, kMissing}, std::vector<double>{1.0, 2.0}), 4.0);
  EXPECT_THROW(mspe(std::vector<double>{}, std::vector<double>{}), std::exception);
}

// ------------------------------------------------------------ bootstrap

TEST(ScmBootstrap, IdenticalDonorsGiveZeroSe) {
  std::mt19937_64 rng(6);
  auto in = oracles::toy_fit(rng, 4, 20, 5, 12);
  for (Eigen::Index j = 1; j < 4; ++j) {
    in.donors_full.col(j) = in.donors_full.col(0);
    in.training.donors.col(j) = in.training.donors.col(0);
    in.validation.donors.col(j) = in.validation.donors.col(0);
    in.validation_outcome.donors.col(j) = in.validation_outcome.donors.col(0);
  }
  ScmConfig config;
  config.bootstrap.resamples = 50;
  const auto r = fit_station(in, config);
  ASSERT_EQ(r.effects.se.size(), r.effects.size());
  for (double se : r.effects.se) EXPECT_EQ(se, 0.0);
  EXPECT_EQ(r.se_mspe_synthetic, 0.0);
}

TEST(ScmBootstrap, FixedSeedIsReproducibleAcrossWorkers) {
  std::mt19937_64 rng(12);
  const auto in = oracles::toy_fit(rng, 6, 20, 5, 12);
  ScmConfig config;
  config.bootstrap.resamples = 40;
  const auto a = fit_station(in, config);
  const auto b = fit_station(in, config);
  config.bootstrap.workers = 3;
  const auto c = fit_station(in, config);
  EXPECT_EQ(a.effects.se, b.effects.se);
  EXPECT_EQ(a.effects.se, c.effects.se);
  EXPECT_EQ(a.outer.weights, c.outer.weights);
  config.bootstrap.seed = 99;
  const auto d = fit_station(in, config);
  EXPECT_NE(a.effects.se, d.effects.se);
}

TEST(ScmBootstrap, DrawsDependOnlyOnSeedAndIndex) {
  for (int b = 0; b < 20; ++b) {
    EXPECT_EQ(bootstrap_draw(7, 123, b), bootstrap_draw(7, 123, b));
    for (auto j : bootstrap_draw(7, 123, b)) EXPECT_LT(j, 7u);
  }
  EXPECT_NE(bootstrap_draw(7, 123, 0), bootstrap_draw(7, 123, 1));
}

TEST(ScmBootstrap, SingleDistinctDayResampleIsHandled) {
  std::mt19937_64 rng(2);
  const auto in = oracles::toy_fit(rng, 3, 20, 5, 12);
  const auto r = fit_columns(in, {1, 1, 1}, OuterConfig{3, 50, 1e-6, 1});
  expect_simplex(r.outer.weights);
  for (std::size_t i = 0; i < r.effects.size(); ++i)
    EXPECT_NEAR(r.effects.counterfactual[i], in.donors_full(r.effects.interval(i), 1), 1e-12);
}

TEST(ScmBootstrap, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(77);
  const auto in = oracles::toy_fit(rng, 3, 16, 4, 10, 2.0);
  const OuterConfig outer{3, 60, 1e-6, 5};
  ResampleProcedure procedure = [&](const std::vector<std::size_t>& cols) {
    return fit_columns(in, cols, outer).effects.effect;
  };
  const int B = 200;
  const auto exact = oracles::enumerate_resamples(procedure, 3, B);
  BootstrapConfig config;
  config.resamples = B;
  config.seed = 2024;
  const auto se = bootstrap_se(procedure, 3, config);
  ASSERT_EQ(se.size(), exact.size());
  for (std::size_t o = 0; o < se.size(); ++o)
    EXPECT_LE(std::abs(se[o] - exact[o].sd), 3.0 * exact[o].sd_of_sd + 1e-12)
        << "output " << o << " se " << se[o] << " exact " << exact[o].sd;
}
