#include <gtest/gtest.h>

#include <algorithm>

#include "metroscm/simgen.hpp"
#include "support.hpp"

using namespace metroscm;
using testing_support::TempDir;

namespace {

SimSpec short_spec(int days = 3) {
  auto spec = default_spec();
  spec.days = days;
  spec.first_day = parse_date("2019-03-11");
  spec.disruption->day = spec.first_day;
  return spec;
}

std::string files_of(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(dir)) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::string all;
  for (const auto& p : paths) all += p.filename().string() + "\n" + testing_support::slurp(p);
  return all;
}

}  // namespace

TEST(Simgen, DefaultSpecShape) {
  const auto spec = default_spec();
  EXPECT_EQ(spec.topology.station_count(), 10u);
  EXPECT_EQ(spec.topology.lines.size(), 2u);
  EXPECT_EQ(spec.calendar_days().size(), 14u);
  for (auto d : spec.calendar_days()) EXPECT_LT(weekday_index(d), 5);
  ASSERT_TRUE(spec.disruption);
  EXPECT_EQ(spec.disruption->station, "S01");
  EXPECT_EQ(spec.disruption->duration, Seconds{27 * 60});
  EXPECT_NO_THROW(spec.validate());
}

TEST(Simgen, ZeroDemandKeepsFullService) {
  auto spec = short_spec(1);
  spec.disruption.reset();
  spec.demand.base_per_interval = 0.0;
  const auto quiet = simulate_day(spec, spec.first_day, false);
  EXPECT_TRUE(quiet.trips.empty());
  EXPECT_TRUE(quiet.abandonments.empty());
  EXPECT_FALSE(quiet.avl.empty());
  for (const auto& row : quiet.manifest) EXPECT_EQ(row.on_board, 0);
  const auto busy = simulate_day(short_spec(1), spec.first_day, false);
  EXPECT_EQ(quiet.avl.size(), busy.avl.size());
}

TEST(Simgen, CleanDayHasNoDetectedHalt) {
  auto spec = short_spec(2);
  spec.disruption.reset();
  const auto sim = simulate(spec);
  EXPECT_FALSE(sim.truth.injected);
  EXPECT_TRUE(detect_disruptions(sim.dataset).empty());
}

TEST(Simgen, PairedRunsAgreeBeforeTheHalt) {
  const auto spec = short_spec(1);
  const auto halt = spec.disruption->start_time();
  const auto with = simulate_day(spec, spec.first_day, true);
  const auto without = simulate_day(spec, spec.first_day, false);
  EXPECT_EQ(with.generated, without.generated);
  auto before = [&](const std::vector<TripRecord>& trips) {
    std::vector<TripRecord> out;
    for (const auto& t : trips)
      if (t.tap_out < halt) out.push_back(t);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.card_id < b.card_id; });
    return out;
  };
  const auto a = before(with.trips), b = before(without.trips);
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].card_id, b[i].card_id);
    EXPECT_EQ(a[i].tap_in, b[i].tap_in);
    EXPECT_EQ(a[i].tap_out, b[i].tap_out);
  }
  auto avl_before = [&](const std::vector<AvlRecord>& avl) {
    std::vector<AvlRecord> out;
    for (const auto& r : avl)
      if (r.time < halt) out.push_back(r);
    return out;
  };
  EXPECT_EQ(avl_before(with.avl), avl_before(without.avl));
  EXPECT_NE(with.avl, without.avl);
}

TEST(Simgen, GroundTruthIsZeroBeforeTheHalt) {
  const auto spec = short_spec(1);
  const auto gt = ground_truth(spec);
  ASSERT_TRUE(gt.injected);
  const int halt_interval = interval_of(spec.disruption->start_time(), spec.topology.grid);
  EXPECT_EQ(halt_interval, 46);
  EXPECT_EQ(gt.treatment_start, 47);
  // Counts and crowding are untouched before the interval holding the halt start.
  // Trip means by tap-in interval also carry journeys still under way at the halt,
  // so they are only exact from two intervals before it.
  for (StationIndex a = 0; a < spec.topology.station_count(); ++a)
    for (auto m : kOutcomes) {
      const bool mean_of_trips = m == Outcome::avg_journey_time || m == Outcome::avg_speed;
      const int last_clean = mean_of_trips ? halt_interval - 2 : halt_interval - 1;
      for (int t = 0; t <= last_clean; ++t) {
        const double e = gt.effect(m, a, t);
        if (!is_missing(e)) ASSERT_EQ(e, 0.0) << outcome_name(m) << " station " << a << " t " << t;
      }
    }
}

TEST(Simgen, NoInjectionGivesZeroTruth) {
  auto spec = short_spec(1);
  spec.disruption.reset();
  const auto gt = ground_truth(spec);
  EXPECT_FALSE(gt.injected);
  for (StationIndex a = 0; a < spec.topology.station_count(); ++a)
    for (auto m : kOutcomes)
      for (int t = 0; t < 72; ++t) {
        const double e = gt.effect(m, a, t);
        if (!is_missing(e)) ASSERT_EQ(e, 0.0);
      }
}

TEST(Simgen, HaltedTerminusLosesExitsAndSlowsDownstream) {
  const auto spec = short_spec(1);
  const auto gt = ground_truth(spec);
  const auto s01 = *spec.topology.find_station("S01");
  EXPECT_LT(gt.effect(Outcome::exit_ridership, s01, 47), 0.0);
  EXPECT_LT(gt.effect(Outcome::entry_ridership, s01, 47), 0.0);
  EXPECT_GT(gt.effect(Outcome::avg_journey_time, s01, 47), 0.0);
  // The next station along the line feels the halt no earlier than the terminus.
  const auto s02 = *spec.topology.find_station("S02");
  int first_s01 = 72, first_s02 = 72;
  for (int t = 71; t >= 0; --t) {
    if (std::abs(gt.effect(Outcome::exit_ridership, s01, t)) > 0.0) first_s01 = t;
    if (std::abs(gt.effect(Outcome::exit_ridership, s02, t)) > 0.0) first_s02 = t;
  }
  EXPECT_LE(first_s01, first_s02);
  EXPECT_LT(first_s02, 72);
}

TEST(Simgen, DeterministicAcrossRunsAndWorkers) {
  const auto spec = short_spec(3);
  TempDir a("sim_a"), b("sim_b");
  write_simulation(a.path(), simulate(spec, 1));
  write_simulation(b.path(), simulate(spec, 3));
  EXPECT_EQ(files_of(a.path()), files_of(b.path()));
  auto other = spec;
  other.seed += 1;
  EXPECT_NE(simulate_day(spec, spec.first_day, false).trips.size(),
            simulate_day(other, spec.first_day, false).trips.size());
}

TEST(Simgen, WrittenDatasetLoadsBack) {
  const auto sim = simulate(short_spec(2));
  TempDir dir("sim_load");
  write_simulation(dir.path(), sim);
  EXPECT_TRUE(std::filesystem::exists(dir / "ground_truth.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "injection_log.csv"));
  const auto ds = load_dataset(dir / "manifest.txt");
  EXPECT_EQ(ds.trips.size(), sim.dataset.trips.size());
  EXPECT_EQ(ds.avl, sim.dataset.avl);
}

TEST(Simgen, SpecJsonRoundTrip) {
  auto spec = default_spec();
  spec.seed = 7;
  spec.days = 12;
  spec.demand.station_weight.assign(spec.topology.station_count(), 1.5);
  const auto text = sim_spec_to_json(spec);
  const auto back = parse_sim_spec(text);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_EQ(back.days, 12);
  EXPECT_EQ(back.demand.station_weight, spec.demand.station_weight);
  EXPECT_EQ(back.disruption->start, spec.disruption->start);
  EXPECT_EQ(sim_spec_to_json(back), text);
}

TEST(Simgen, InvalidSpecsAreRejected) {
  EXPECT_THROW(parse_sim_spec("{not json"), InputError);
  auto spec = default_spec();
  spec.days = 0;
  EXPECT_THROW(spec.validate(), InputError);
  spec = default_spec();
  spec.demand.station_weight = {1.0, 2.0};
  EXPECT_THROW(spec.validate(), InputError);
  spec = default_spec();
  spec.disruption->station = "nowhere";
  EXPECT_THROW(spec.validate(), InputError);
  spec = default_spec();
  spec.events.concert_probability = 1.5;
  EXPECT_THROW(spec.validate(), InputError);
}
