#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <fmt/format.h>

#include "metroscm/simgen.hpp"
#include "support.hpp"

using namespace metroscm;
using testing_support::slurp;
using testing_support::spit;
using testing_support::TempDir;

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const auto cmd = std::string(METROSCM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tree(const fs::path& dir) {
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::string all;
  for (const auto& p : paths) all += fs::relative(p, dir).generic_string() + "\n" + slurp(p);
  return all;
}

// One simulated dataset shared by every test in this file.
const fs::path& dataset() {
  static TempDir dir("cli_data");
  static const bool made = [] {
    auto spec = default_spec();
    spec.days = 8;
    spec.first_day = parse_date("2019-03-01");
    spec.disruption->day = parse_date("2019-03-11");
    spit(dir / "spec.json", sim_spec_to_json(spec));
    return run(fmt::format("simulate --spec {} --out {}", (dir / "spec.json").string(), (dir / "sim").string())) == 0;
  }();
  EXPECT_TRUE(made);
  return dir.path();
}

std::string manifest() { return (dataset() / "sim" / "manifest.txt").string(); }

const char* kQuick = "--stations S01,S02 --outcomes exit_ridership,avg_speed -B 6 --starts 2 --evaluations 60 "
                     "--bootstrap-starts 1 --bootstrap-evaluations 30";

}  // namespace

TEST(Cli, SimulateIsByteIdentical) {
  TempDir a("cli_a"), b("cli_b");
  const auto spec = (dataset() / "spec.json").string();
  ASSERT_EQ(run(fmt::format("simulate --spec {} --out {}", spec, (a / "o").string())), 0);
  ASSERT_EQ(run(fmt::format("simulate --spec {} --out {} --workers 2", spec, (b / "o").string())), 0);
  EXPECT_EQ(tree(a / "o"), tree(b / "o"));
  EXPECT_EQ(tree(a / "o"), tree(dataset() / "sim"));
  EXPECT_TRUE(fs::exists(a / "o" / "ground_truth.csv"));
  EXPECT_TRUE(fs::exists(a / "o" / "injection_log.csv"));
}

TEST(Cli, CorruptSpecLeavesNothingBehind) {
  TempDir dir("cli_bad");
  spit(dir / "bad.json", "{\"days\": 0");
  EXPECT_EQ(run(fmt::format("simulate --spec {} --out {}", (dir / "bad.json").string(), (dir / "o").string())), 1);
  EXPECT_FALSE(fs::exists(dir / "o"));
  EXPECT_FALSE(fs::exists(dir / "o.partial"));
  spit(dir / "zero.json", "{\"days\": 0}");
  EXPECT_EQ(run(fmt::format("simulate --spec {} --out {}", (dir / "zero.json").string(), (dir / "o").string())), 1);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, RefusesToOverwriteWithoutForce) {
  TempDir dir("cli_force");
  spit(dir / "o" / "keep.txt", "x");
  const auto spec = (dataset() / "spec.json").string();
  EXPECT_EQ(run(fmt::format("simulate --spec {} --out {}", spec, (dir / "o").string())), 1);
  EXPECT_TRUE(fs::exists(dir / "o" / "keep.txt"));
  EXPECT_EQ(run(fmt::format("simulate --spec {} --out {} --force", spec, (dir / "o").string())), 0);
  EXPECT_FALSE(fs::exists(dir / "o" / "keep.txt"));
}

TEST(Cli, DetectFindsTheInjectedHalt) {
  TempDir dir("cli_detect");
  ASSERT_EQ(run(fmt::format("detect --manifest {} --out {}", manifest(), dir.path().string())), 0);
  const auto text = slurp(dir / "disruptions.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find("S01"), std::string::npos);
  EXPECT_NE(text.find("2019-03-11"), std::string::npos);
}

TEST(Cli, IngestWritesPanel) {
  TempDir dir("cli_ingest");
  ASSERT_EQ(run(fmt::format("ingest --manifest {} --out {}", manifest(), dir.path().string())), 0);
  EXPECT_TRUE(fs::exists(dir / "panel.csv"));
  EXPECT_TRUE(fs::exists(dir / "distances.csv"));
}

TEST(Cli, EstimateIsIndependentOfWorkerCount) {
  TempDir dir("cli_est");
  ASSERT_EQ(run(fmt::format("estimate --manifest {} --out {} --workers 1 {}", manifest(), (dir / "w1").string(), kQuick)), 0);
  ASSERT_EQ(run(fmt::format("estimate --manifest {} --out {} --workers 2 {}", manifest(), (dir / "w2").string(), kQuick)), 0);
  for (const auto* f : {"weights.csv", "weights_table.csv", "predictors_report.csv", "mspe_report.csv", "effects.csv",
                        "propagation_summary.csv", "run_manifest.json"}) {
    ASSERT_TRUE(fs::exists(dir / "w1" / f)) << f;
    EXPECT_EQ(slurp(dir / "w1" / f), slurp(dir / "w2" / f)) << f;
  }
  EXPECT_EQ(tree(dir / "w1"), tree(dir / "w2"));
  EXPECT_TRUE(fs::exists(dir / "w1" / "geo" / "geo_avg_speed_t47.geojson"));

  const auto mspe = slurp(dir / "w1" / "mspe_report.csv");
  EXPECT_NE(mspe.find(" ("), std::string::npos);
  ASSERT_EQ(run(fmt::format("report --dir {} --out {}", (dir / "w1").string(), (dir / "report.txt").string())), 0);
  EXPECT_NE(slurp(dir / "report.txt").find("Ave speed"), std::string::npos);
}

TEST(Cli, TooFewDonorsIsAnEstimationFailure) {
  TempDir dir("cli_j1");
  auto spec = default_spec();
  spec.days = 2;
  spec.first_day = parse_date("2019-03-08");
  spec.disruption->day = parse_date("2019-03-11");
  spit(dir / "spec.json", sim_spec_to_json(spec));
  ASSERT_EQ(run(fmt::format("simulate --spec {} --out {}", (dir / "spec.json").string(), (dir / "sim").string())), 0);
  EXPECT_EQ(run(fmt::format("estimate --manifest {} --out {} --no-bootstrap --stations S01",
                            (dir / "sim" / "manifest.txt").string(), (dir / "est").string())),
            2);
}

TEST(Cli, BadArgumentsAreInputErrors) {
  TempDir dir("cli_args");
  EXPECT_EQ(run(fmt::format("estimate --manifest {} --out {} --disruption 9 --no-bootstrap", manifest(),
                            (dir / "a").string())),
            1);
  EXPECT_EQ(run(fmt::format("estimate --manifest {} --out {} --stations NOPE --no-bootstrap", manifest(),
                            (dir / "b").string())),
            1);
  EXPECT_EQ(run(fmt::format("detect --manifest {} --out {}", (dir / "missing.txt").string(), (dir / "c").string())), 1);
  EXPECT_EQ(run("estimate --bogus"), 1);
  EXPECT_EQ(run("--help"), 0);
}
