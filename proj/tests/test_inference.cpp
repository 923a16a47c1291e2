#include <gtest/gtest.h>

#include "cusumrl/inference.hpp"
#include "cusumrl/sim.hpp"
#include "fixtures.hpp"

using namespace cusumrl;

namespace {

struct Instance {
  Dataset ds;
  BasisSpec basis;
  WindowDesign window;
  std::vector<SegmentFit> fits;
  FqiConfig cfg;
};

Instance make_instance(unsigned seed, int N = 3, int T = 12) {
  Instance in;
  in.ds = fixture::tiny_dataset(N, T, seed);
  in.basis = sample_basis(2, 2, 1, 0.5, seed + 200);
  in.cfg.ridge = 1e-6;
  in.cfg.tol = 1e-10;
  in.window = make_window(in.ds, 0, T, in.basis);
  ScanConfig sc;
  sc.epsilon = 0.25;
  in.fits = fit_segments(in.window, candidate_grid(0, T, sc), in.cfg);
  return in;
}

oracle::Vec to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

const std::vector<StatKind> kAllKinds{StatKind::Integral, StatKind::Max, StatKind::NormalizedMax};

}  // namespace

TEST(Inference, PValueConventions) {
  std::vector<double> draws(500);
  for (int b = 0; b < 500; ++b) draws[b] = b * 0.01;
  EXPECT_NEAR(p_value(100.0, draws), 1.0 / 501, 1e-15);
  EXPECT_DOUBLE_EQ(p_value(-1.0, draws), 1.0);
  std::vector<double> same(10, 2.0);
  EXPECT_DOUBLE_EQ(p_value(2.0, same), 1.0);
  EXPECT_GE(p_value(1.0, draws), p_value(2.0, draws));
}

TEST(Inference, AggregatePValues) {
  std::vector<double> ones(4, 1.0);
  EXPECT_DOUBLE_EQ(aggregate_pvalues(ones, 0.1), 1.0);
  std::vector<double> flat(4, 0.003);
  EXPECT_NEAR(aggregate_pvalues(flat, 0.1), 0.03, 1e-15);
  std::vector<double> p{0.02, 0.40, 0.80, 1.0};
  EXPECT_NEAR(aggregate_pvalues(p, 0.1), 0.2, 1e-15);
  std::vector<double> q{0.3, 0.01, 0.2, 0.05, 0.5, 0.4, 0.9, 0.8, 0.6, 0.7, 0.02, 0.03};
  EXPECT_NEAR(aggregate_pvalues(q, 0.25), 0.03 / 0.25, 1e-15);  // rank ceil(3) = 3
  EXPECT_GE(aggregate_pvalues(q, 0.25), 0.01 / 0.25);
}

TEST(Inference, BootstrapDrawLinearity) {
  auto in = make_instance(1);
  const auto& f = in.fits[1];
  auto seg = in.window.left(f.u);
  const auto n = seg.rows();
  std::vector<double> zero(n, 0.0), e1(n), e2(n), sum(n);
  std::mt19937_64 g(3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (Eigen::Index r = 0; r < n; ++r) {
    e1[r] = z(g);
    e2[r] = z(g);
    sum[r] = e1[r] + e2[r];
  }
  EXPECT_EQ(bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, zero).cwiseAbs().maxCoeff(), 0.0);
  Eigen::VectorXd c = bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, sum) -
           bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, e1) -
           bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, e2);
  const double scale = bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, sum).cwiseAbs().maxCoeff();
  EXPECT_LT(c.cwiseAbs().maxCoeff(), 1e-12 * (1.0 + scale));
}

TEST(Inference, UnitMultipliersReproduceEstimatingEquation) {
  auto in = make_instance(2);
  in.cfg.ridge = 0.0;
  auto f = fit_segment(in.window, in.fits[2].u, in.cfg);
  auto seg = in.window.left(f.u);
  std::vector<double> ones(seg.rows(), 1.0);
  EXPECT_LT(bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, ones).norm(), 1e-8);
}

TEST(Inference, BootstrapDrawMatchesOracle) {
  auto in = make_instance(3);
  const auto& f = in.fits.front();
  auto seg = in.window.left(f.u);
  auto e = bootstrap_multipliers(99, 0, in.window.design.rows());
  std::vector<double> ev(e.data(), e.data() + e.size());
  auto c = bootstrap_q_draw(seg, f.delta_left, f.w_left_inv, std::span<const double>(ev).first(seg.rows()));
  auto o = oracle::bootstrap_coef(in.ds, in.basis, to_vec(f.left.beta), in.cfg.discount, 0, 0, f.u, ev,
                                  f.left.ridge);
  for (int p = 0; p < 4; ++p) EXPECT_NEAR(c(p), o[p], 1e-12);
}

TEST(Inference, BootstrapStatisticsMatchBruteForce) {
  for (unsigned seed : {4u, 5u}) {
    auto in = make_instance(seed);
    BootstrapConfig bc;
    bc.B = 3;
    bc.seed = 1234 + seed;
    auto draws = bootstrap_statistics(in.window, in.fits, bc, kAllKinds);
    std::vector<oracle::Split> splits;
    for (const auto& f : in.fits) splits.push_back({f.u, to_vec(f.left.beta), to_vec(f.right.beta), f.left.ridge, f.right.ridge});
    for (int b = 0; b < 3; ++b) {
      auto e = bootstrap_multipliers(bc.seed, b, in.window.design.rows());
      oracle::Vec ev(e.data(), e.data() + e.size());
      auto bf = oracle::statistics(in.ds, in.basis, in.cfg.discount, 0, 12, splits,
                                   oracle::bootstrap_diff(in.ds, in.basis, in.cfg.discount, 0, 12, splits, ev));
      EXPECT_NEAR(draws[StatKind::Integral][b], bf.integral, 1e-10);
      EXPECT_NEAR(draws[StatKind::Max][b], bf.max, 1e-10);
      EXPECT_NEAR(draws[StatKind::NormalizedMax][b], bf.norm, 1e-10);
    }
  }
}

TEST(Inference, BootstrapDeterministicAcrossWorkers) {
  auto in = make_instance(6, 3, 12);
  BootstrapConfig bc;
  bc.B = 300;
  bc.seed = 5;
  auto a = bootstrap_statistics(in.window, in.fits, bc, kAllKinds, 1);
  auto b = bootstrap_statistics(in.window, in.fits, bc, kAllKinds, 3);
  auto c = bootstrap_statistics(in.window, in.fits, bc, kAllKinds, 1);
  for (int k = 0; k < kNumStatKinds; ++k) {
    EXPECT_EQ(a.draws[k], b.draws[k]);
    EXPECT_EQ(a.draws[k], c.draws[k]);
  }
}

TEST(Inference, RunTestDeterministicAcrossWorkers) {
  ScenarioSpec spec;
  spec.N = 30;
  spec.T = 40;
  spec.t_star = 20;
  auto ds = gen_scenario(spec, 3);
  TestConfig tc;
  tc.bootstrap_b = 100;
  tc.repetitions = 2;
  tc.kinds = kAllKinds;
  tc.workers = 1;
  auto a = run_test(ds, 0, 40, tc, 77);
  tc.workers = 4;
  auto b = run_test(ds, 0, 40, tc, 77);
  EXPECT_EQ(a.to_json(true).dump(), b.to_json(true).dump());
  for (double p : a.p_values) {
    EXPECT_GT(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Inference, SingleTestPValueMatchesDraws) {
  ScenarioSpec spec;
  spec.N = 20;
  spec.T = 30;
  spec.t_star = 30;
  auto ds = gen_scenario(spec, 4);
  TestConfig tc;
  tc.bootstrap_b = 50;
  tc.cross_validate = false;
  tc.num_features = 4;
  auto results = run_single_test(ds, 0, 30, tc, 9);
  ASSERT_EQ(results.size(), 1u);
  const auto& r = results.front();
  EXPECT_EQ(r.draws.size(), 50u);
  EXPECT_DOUBLE_EQ(r.p_value, p_value(r.statistic, r.draws));
}

TEST(Inference, EmptyGridThrows) {
  ScenarioSpec spec;
  spec.N = 5;
  spec.T = 10;
  spec.t_star = 10;
  auto ds = gen_scenario(spec, 1);
  TestConfig tc;
  tc.bootstrap_b = 10;
  EXPECT_ANY_THROW(run_test(ds, 8, 10, tc, 1));
}
