#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "metroscm/data.hpp"
#include "metroscm/simgen.hpp"
#include "support.hpp"

using namespace metroscm;
using testing_support::at;
using testing_support::spit;
using testing_support::TempDir;

namespace {

SimSpec small_spec() {
  auto spec = default_spec();
  spec.days = 3;
  spec.disruption.reset();
  return spec;
}

void write_minimal(const TempDir& dir, const std::string& trips) {
  write_topology_json(dir / "topology.json", testing_support::line_topology({1.2, 0.8}));
  spit(dir / "trips.csv", "card_id,origin,dest,tap_in,tap_out\n" + trips);
  spit(dir / "avl.csv", "train_id,service_id,station,line,direction,event,time\n");
  spit(dir / "manifest.txt", "topology = topology.json\ntrips = trips.csv\navl = avl.csv\n");
}

}  // namespace

TEST(Data, SimulatorOutputRoundTrips) {
  const auto sim = simulate(small_spec());
  TempDir dir("data_rt");
  write_dataset(dir.path(), sim.dataset);
  const auto loaded = load_dataset(dir / "manifest.txt");
  EXPECT_EQ(loaded.trips, sim.dataset.trips);
  EXPECT_EQ(loaded.avl, sim.dataset.avl);
  EXPECT_EQ(loaded.abandonments, sim.dataset.abandonments);
  EXPECT_EQ(loaded.events, sim.dataset.events);
  EXPECT_EQ(loaded.calendar, sim.dataset.calendar);
  EXPECT_EQ(loaded.topology.stations, sim.dataset.topology.stations);
  EXPECT_EQ(loaded.topology.lines, sim.dataset.topology.lines);
  EXPECT_EQ(loaded.topology.edges, sim.dataset.topology.edges);
  ASSERT_EQ(loaded.weather.hourly().size(), sim.dataset.weather.hourly().size());
  for (std::size_t i = 0; i < loaded.weather.hourly().size(); ++i) {
    const auto& a = loaded.weather.hourly()[i];
    const auto& b = sim.dataset.weather.hourly()[i];
    EXPECT_EQ(a.hour, b.hour);
    EXPECT_NEAR(a.sample.temperature_c, b.sample.temperature_c, 0.005);
    EXPECT_NEAR(a.sample.wind_kmh, b.sample.wind_kmh, 0.005);
    EXPECT_NEAR(a.sample.rain_mmh, b.sample.rain_mmh, 0.005);
  }
  EXPECT_FALSE(loaded.trips.empty());
  EXPECT_FALSE(loaded.avl.empty());
  EXPECT_EQ(loaded.report.rejected("trips"), 0u);
  EXPECT_EQ(loaded.report.accepted("trips"), loaded.trips.size());
}

TEST(Data, LoadingIsIdempotent) {
  const auto sim = simulate(small_spec());
  TempDir dir("data_idem");
  write_dataset(dir.path(), sim.dataset);
  const auto first = load_dataset(dir / "manifest.txt");
  const auto second = load_dataset(dir / "manifest.txt");
  EXPECT_EQ(first.trips, second.trips);
  EXPECT_EQ(first.avl, second.avl);
  EXPECT_EQ(first.weather, second.weather);
  EXPECT_EQ(first.calendar, second.calendar);

  TempDir again("data_idem2");
  write_dataset(again.path(), first);
  for (const char* f : {"trips.csv", "avl.csv", "weather.csv", "events.csv", "calendar.csv", "topology.json"})
    EXPECT_EQ(testing_support::slurp(dir / f), testing_support::slurp(again / f)) << f;
}

TEST(Data, RejectsTapOutNotAfterTapIn) {
  TempDir dir("data_rej");
  write_minimal(dir,
                "c1,A,C,2019-03-11T08:00:00,2019-03-11T08:10:00\n"
                "c2,A,C,2019-03-11T08:00:00,2019-03-11T08:00:00\n"
                "c3,C,A,2019-03-11T09:00:00,2019-03-11T08:59:00\n");
  const auto ds = load_dataset(dir / "manifest.txt");
  ASSERT_EQ(ds.trips.size(), 1u);
  EXPECT_EQ(ds.trips[0].card_id, "c1");
  EXPECT_EQ(ds.report.rejected("trips"), 2u);
  EXPECT_EQ(ds.report.accepted("trips"), 1u);
  ASSERT_EQ(ds.report.issues.size(), 2u);
  EXPECT_EQ(ds.report.issues[0].row, 3u);
  EXPECT_EQ(ds.report.issues[1].row, 4u);
}

TEST(Data, AdversarialTripRowsNeverSurvive) {
  std::mt19937 rng(11);
  const std::vector<std::string> stations{"A", "B", "C", "Z", ""};
  std::string rows;
  for (int i = 0; i < 400; ++i) {
    const auto base = at("2019-03-11T05:50:00") + Seconds{static_cast<long>(rng() % (19 * 3600))};
    const auto out = base + Seconds{static_cast<long>(rng() % 1200) - 300};
    std::string in_text = format_timestamp(base);
    if (rng() % 20 == 0) in_text = "2019-03-11T25:61:00";
    if (rng() % 20 == 0) in_text = "garbage";
    rows += fmt::format("card{},{},{},{},{}", i, stations[rng() % stations.size()], stations[rng() % stations.size()],
                        in_text, format_timestamp(out));
    if (rng() % 25 == 0) rows += ",extra";
    rows += "\n";
  }
  TempDir dir("data_adv");
  write_minimal(dir, rows);
  const auto ds = load_dataset(dir / "manifest.txt");
  const ServiceGrid grid;
  for (const auto& t : ds.trips) {
    EXPECT_GT(t.tap_out, t.tap_in);
    EXPECT_NE(t.origin, t.dest);
    EXPECT_TRUE(grid.in_service(t.tap_in));
  }
  EXPECT_EQ(ds.report.accepted("trips") + ds.report.rejected("trips"), 400u);
  EXPECT_EQ(ds.report.accepted("trips"), ds.trips.size());
  EXPECT_GT(ds.report.rejected("trips"), 0u);
}

TEST(Data, MissingFileAndHeaderMismatchAreErrors) {
  TempDir dir("data_err");
  write_minimal(dir, "");
  std::filesystem::remove(dir / "avl.csv");
  EXPECT_THROW(load_dataset(dir / "manifest.txt"), InputError);
  spit(dir / "avl.csv", "train,service,station\n");
  EXPECT_THROW(load_dataset(dir / "manifest.txt"), InputError);
  EXPECT_THROW(load_dataset(dir / "nope.txt"), InputError);
  spit(dir / "bad_manifest.txt", "topology = topology.json\ncolour = red\n");
  EXPECT_THROW(load_dataset(dir / "bad_manifest.txt"), InputError);
}

TEST(Data, WeatherExpandsToFourRowsPerHourPerStation) {
  const auto topo = testing_support::line_topology({1.0, 1.0});
  std::vector<WeatherRecord> hourly{{at("2019-03-11T06:00:00"), {18.0, 10.0, 0.0}},
                                    {at("2019-03-11T07:00:00"), {19.5, 12.0, 1.5}},
                                    {at("2019-03-11T23:00:00"), {16.0, 8.0, 0.2}}};
  const WeatherTable table(hourly);
  const auto rows = expand_weather(table, topo);
  ASSERT_EQ(rows.size(), 3u * 4u * topo.station_count());
  for (const auto& r : rows) {
    const auto begin = topo.grid.interval_begin(r.day, r.interval);
    const auto hour = begin - (time_of_day(begin) % std::chrono::hours{1});
    const auto it = std::find_if(hourly.begin(), hourly.end(), [&](const auto& w) { return w.hour == hour; });
    ASSERT_NE(it, hourly.end());
    EXPECT_EQ(r.sample, it->sample);
  }
  EXPECT_EQ(table.at(at("2019-03-11T07:59:59"))->temperature_c, 19.5);
  EXPECT_FALSE(table.at(at("2019-03-11T08:00:00")).has_value());
}

TEST(Data, TopologyValidation) {
  auto topo = testing_support::line_topology({1.0, 1.0});
  EXPECT_EQ(topo.grid.count(), 72);
  auto bad = topo;
  bad.edges[0].km = 0.0;
  EXPECT_THROW(bad.finalize(), InputError);
  bad = topo;
  bad.edges[1].to = 17;
  EXPECT_THROW(bad.finalize(), InputError);
  bad = topo;
  bad.stations[1].id = "A";
  EXPECT_THROW(bad.finalize(), InputError);
  const auto parsed = parse_topology_json(topology_to_json(topo));
  EXPECT_EQ(parsed.stations, topo.stations);
  EXPECT_EQ(parsed.edges, topo.edges);
  EXPECT_THROW(parse_topology_json("{not json"), InputError);
}

TEST(Data, InterchangeFlag) {
  const auto topo = testing_support::toy_network();
  EXPECT_TRUE(topo.stations[2].interchange());
  EXPECT_TRUE(topo.stations[7].interchange());
  EXPECT_FALSE(topo.stations[0].interchange());
}

TEST(Data, CalendarExcludesHolidaysAndIncompleteDays) {
  Dataset ds;
  ds.calendar = {{parse_date("2019-03-11"), false, true},
                 {parse_date("2019-03-12"), true, true},
                 {parse_date("2019-03-13"), false, false},
                 {parse_date("2019-03-14"), false, true}};
  const auto days = ds.analysis_days();
  EXPECT_EQ(days, (std::vector<Day>{parse_date("2019-03-11"), parse_date("2019-03-14")}));
}

TEST(Data, StationsWithoutCoordinatesStayUnknown) {
  TempDir dir("data_nocoord");
  auto topo = testing_support::line_topology({1.0});
  topo.stations[0].latitude = std::numeric_limits<double>::quiet_NaN();
  topo.stations[0].longitude = std::numeric_limits<double>::quiet_NaN();
  write_topology_json(dir / "topology.json", topo);
  EXPECT_EQ(testing_support::slurp(dir / "topology.json").find("\"lat\": null"), std::string::npos);
  const auto back = read_topology_json(dir / "topology.json");
  EXPECT_TRUE(std::isnan(back.stations[0].latitude));
  EXPECT_EQ(back.stations[1].latitude, topo.stations[1].latitude);
}
