#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cusumrl/sim.hpp"
#include "cusumrl/trajectory.hpp"

using namespace cusumrl;

namespace {

Dataset small_dataset(int N, int T) {
  ScenarioSpec spec;
  spec.N = N;
  spec.T = T;
  spec.t_star = T / 2;
  return gen_scenario(spec, 11);
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cusumrl_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Trajectory, SliceFullIntervalHasNTRows) {
  auto ds = small_dataset(2, 10);
  EXPECT_EQ(slice_interval(ds, 0, 10).size(), 20u);
}

TEST(Trajectory, SliceSubinterval) {
  auto ds = small_dataset(2, 10);
  auto b = slice_interval(ds, 4, 7);
  ASSERT_EQ(b.size(), 6u);
  for (std::size_t r = 0; r < b.size(); ++r) {
    EXPECT_GE(b.time[r], 4);
    EXPECT_LT(b.time[r], 7);
    auto next = ds.state(b.traj[r], b.time[r] + 1);
    EXPECT_EQ(b.next_state(r)[0], next[0]);
  }
}

TEST(Trajectory, InvertedSliceThrows) {
  auto ds = small_dataset(2, 10);
  EXPECT_THROW(slice_interval(ds, 7, 4), std::out_of_range);
}

TEST(Trajectory, ScalerDegenerateAndSymmetric) {
  Dataset same(1, 2, 1, 2, 0, {3.0, 3.0, 3.0}, {0, 1}, {0.0, 0.0});
  auto p = fit_scaler(same, 0, 2);
  EXPECT_DOUBLE_EQ(p.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(p.sd[0], 1.0);

  Dataset pm(1, 1, 1, 2, 0, {-1.0, 1.0}, {0}, {0.0});
  auto q = fit_scaler(pm, 0, 1);
  EXPECT_DOUBLE_EQ(q.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(q.sd[0], 1.0);
}

TEST(Trajectory, ScaledStatesHaveZeroMean) {
  auto ds = small_dataset(5, 20);
  auto p = fit_scaler(ds, 3, 12);
  auto scaled = p.apply(ds);
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < ds.num_trajectories(); ++i)
    for (int t = 3; t <= 12; ++t, ++n) sum += scaled.state(i, t)[0];
  EXPECT_NEAR(sum / n, 0.0, 1e-12);
}

TEST(Trajectory, CsvRoundTrip) {
  auto ds = small_dataset(3, 7);
  auto path = temp_file("roundtrip.csv");
  write_csv(ds, path);
  auto back = read_csv(path);
  ASSERT_EQ(back.num_trajectories(), 3);
  ASSERT_EQ(back.horizon(), 7);
  ASSERT_EQ(back.state_dim(), 1);
  for (std::size_t k = 0; k < ds.states().size(); ++k) EXPECT_NEAR(back.states()[k], ds.states()[k], 1e-9);
  for (std::size_t k = 0; k < ds.rewards().size(); ++k) EXPECT_NEAR(back.rewards()[k], ds.rewards()[k], 1e-9);
  EXPECT_EQ(back.actions(), ds.actions());
}

TEST(Trajectory, CsvSkipsCommentLines) {
  auto path = temp_file("comments.csv");
  std::ofstream(path) << "# seed=1\n# other\ni,t,a,r,s1\n0,0,1,0.5,0.1\n0,1,,,0.2\n";
  auto ds = read_csv(path);
  EXPECT_EQ(ds.num_trajectories(), 1);
  EXPECT_EQ(ds.horizon(), 1);
  EXPECT_DOUBLE_EQ(ds.reward(0, 0), 0.5);
}

TEST(Trajectory, ActionOutOfRangeIsParseError) {
  auto path = temp_file("bad_action.csv");
  std::ofstream(path) << "i,t,a,r,s1\n0,0,2,0.5,0.1\n0,1,,,0.2\n";
  EXPECT_THROW(read_csv(path, 2), ParseError);
}

TEST(Trajectory, EmptyFileHasNoTrajectories) {
  auto path = temp_file("empty.csv");
  std::ofstream(path) << "";
  try {
    read_csv(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no trajectories"), std::string::npos);
  }
}

TEST(Trajectory, RaggedInputRejected) {
  auto path = temp_file("ragged.csv");
  std::ofstream(path) << "i,t,a,r,s1\n0,0,1,0.5,0.1\n0,1,,,0.2\n1,0,1,0.5,0.1\n1,1,0,0.5,0.1\n1,2,,,0.2\n";
  EXPECT_THROW(read_csv(path), ParseError);
}
