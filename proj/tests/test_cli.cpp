#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cusumrl/trajectory.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "cusumrl_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CUSUMRL_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST(Cli, SimulateDimensionsAndDeterminism) {
  auto dir = scratch("simulate");
  ASSERT_EQ(run("simulate --scenario 1 --n 25 --horizon 100 --tstar 50 --seed 7 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("simulate --scenario 1 --n 25 --horizon 100 --tstar 50 --seed 7 --out " + (dir / "b").string()), 0);
  auto ds = cusumrl::read_csv(dir / "a" / "data.csv");
  EXPECT_EQ(ds.num_trajectories(), 25);
  EXPECT_EQ(ds.horizon() + 1, 101);
  EXPECT_EQ(ds.state_dim(), 1);
  EXPECT_EQ(slurp(dir / "a" / "data.csv"), slurp(dir / "b" / "data.csv"));
  auto meta = load_json(dir / "a" / "simulate.json");
  EXPECT_EQ(meta["dims"], nlohmann::json({25, 101, 1}));
}

TEST(Cli, ReplayFromEmbeddedConfig) {
  auto dir = scratch("replay");
  ASSERT_EQ(run("simulate --scenario ihs --n 10 --seed 3 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("--config " + (dir / "a" / "simulate_config.ini").string() + " simulate --workers 8 --out " +
                (dir / "b").string()),
            0);
  EXPECT_EQ(slurp(dir / "a" / "data.csv"), slurp(dir / "b" / "data.csv"));
  EXPECT_EQ(slurp(dir / "a" / "simulate.json"), slurp(dir / "b" / "simulate.json"));
}

TEST(Cli, UsageErrors) {
  auto dir = scratch("usage");
  EXPECT_EQ(run("simulate --n 25 --horizon 100 --tstar 120 --out " + dir.string()), 2);
  EXPECT_EQ(run("simulate --scenario 7 --out " + dir.string()), 2);
  EXPECT_EQ(run("nonsense"), 2);
  EXPECT_EQ(run("test --data x.csv --stat median --out " + dir.string()), 2);
}

TEST(Cli, MissingInputsAreFileErrors) {
  auto dir = scratch("missing");
  EXPECT_EQ(run("test --data " + (dir / "none.csv").string() + " --out " + dir.string()), 4);
  EXPECT_EQ(run("report --inputs " + (dir / "none.csv").string() + " --out " + dir.string()), 4);
  EXPECT_EQ(run("--config " + (dir / "none.ini").string() + " simulate --out " + dir.string()), 4);
}

TEST(Cli, AlphaOneAlwaysRejects) {
  auto dir = scratch("alpha");
  ASSERT_EQ(run("simulate --n 20 --seed 2 --out " + dir.string()), 0);
  ASSERT_EQ(run("test --data " + (dir / "data.csv").string() +
                " --t0 50 --alpha 1 --bootstrap-b 50 --reps 1 --out " + dir.string()),
            0);
  auto j = load_json(dir / "test.json");
  EXPECT_TRUE(j["decisions"]["integral"]["rejected"].get<bool>());
}

TEST(Cli, NullWindowMostlyAccepted) {
  auto dir = scratch("null");
  int rejected = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto sub = dir / std::to_string(seed);
    ASSERT_EQ(run("simulate --n 25 --seed " + std::to_string(seed) + " --out " + sub.string()), 0);
    ASSERT_EQ(run("test --data " + (sub / "data.csv").string() +
                  " --t0 50 --bootstrap-b 200 --reps 2 --seed " + std::to_string(seed) + " --out " + sub.string()),
              0);
    rejected += load_json(sub / "test.json")["decisions"]["integral"]["rejected"].get<bool>() ? 1 : 0;
  }
  EXPECT_LT(rejected, 10);
}

TEST(Cli, StrongShiftRejected) {
  auto dir = scratch("shift");
  cusumrl::write_csv(fixture::tiny_dataset(60, 40, 5, 5.0), dir / "data.csv");
  ASSERT_EQ(run("test --data " + (dir / "data.csv").string() + " --bootstrap-b 200 --reps 2 --out " + dir.string()), 0);
  EXPECT_TRUE(load_json(dir / "test.json")["decisions"]["integral"]["rejected"].get<bool>());
}

TEST(Cli, DetectAndReportTables) {
  auto dir = scratch("report");
  std::string inputs;
  for (int seed = 0; seed < 3; ++seed) {
    const auto sub = dir / std::to_string(seed);
    ASSERT_EQ(run("simulate --n 30 --seed " + std::to_string(seed) + " --out " + sub.string()), 0);
    ASSERT_EQ(run("detect --data " + (sub / "data.csv").string() +
                  " --kappa-min 25 --kappa-max 45 --bootstrap-b 100 --reps 1 --full-scan --out " + sub.string()),
              0);
    inputs += " " + (sub / "detect.csv").string();
  }
  ASSERT_EQ(run("report --inputs" + inputs + " --out " + dir.string()), 0);
  auto j = load_json(dir / "report.json");
  EXPECT_EQ(j["rows"].size(), 3u);
  EXPECT_EQ(j["rejection_rate"].size(), 5u);
  double mean = 0.0;
  for (const auto& row : j["rows"]) mean += row["kappa_25"].get<int>();
  EXPECT_DOUBLE_EQ(j["rejection_rate"]["kappa_25"].get<double>(), mean / 3);
}

TEST(Cli, OnlineRecordsPairedSeeds) {
  auto dir = scratch("online");
  ASSERT_EQ(run("online --n 12 --horizon 40 --tstar 20 --batches 1 --batch-len 10 --bootstrap-b 50 --reps 1"
                " --kappa-min 10 --kappa-max 30 --kappa-step 10 --cv-candidates 4"
                " --methods overall,random,proposed --out " + dir.string()),
            0);
  std::ifstream f(dir / "online.csv");
  std::string line;
  int rows = 0;
  while (std::getline(f, line))
    if (!line.empty() && line[0] != '#' && line.rfind("rep,", 0) != 0) ++rows;
  EXPECT_EQ(rows, 3);
  auto j = load_json(dir / "online.json");
  ASSERT_EQ(j["replications"].size(), 1u);
  const auto& rep = j["replications"][0];
  EXPECT_TRUE(rep.contains("problem_seed"));
  EXPECT_TRUE(rep.contains("run_seed"));
  EXPECT_EQ(rep["values"].size(), 3u);
}
