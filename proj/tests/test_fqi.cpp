#include <gtest/gtest.h>

#include "cusumrl/fqi.hpp"
#include "cusumrl/sim.hpp"
#include "fixtures.hpp"

using namespace cusumrl;

namespace {

LinearDesign scenario_design(int N, int T, int M, unsigned seed) {
  ScenarioSpec spec;
  spec.N = N;
  spec.T = T;
  spec.t_star = T;
  auto ds = gen_scenario(spec, seed);
  auto basis = sample_basis(2, M, 1, 0.5, seed + 1);
  return LinearDesign::from_batch(slice_interval(ds, 0, T), basis);
}

}  // namespace

TEST(Fqi, TabularMatchesValueIteration) {
  for (const auto& mdp : fixture::tabular_mdps()) {
    FqiConfig cfg;
    cfg.discount = mdp.discount;
    cfg.ridge = 0.0;
    cfg.tol = 1e-10;
    cfg.k_max = 5000;
    auto q = fit_linear_fqi(fixture::tabular_design(mdp), cfg);
    ASSERT_TRUE(q.converged) << q.diagnostic;
    auto star = oracle::value_iteration(mdp);
    double gap = 0.0;
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < 2; ++a) gap = std::max(gap, std::abs(q.beta(a * mdp.num_states + s) - star[s][a]));
    EXPECT_LT(gap, 1e-6) << mdp.num_states << " states";
  }
}

TEST(Fqi, TabularFixedPointHasZeroTdErrors) {
  // deterministic transitions and rewards
  oracle::TabularMdp mdp = fixture::tabular_mdps()[0];
  mdp.p = {{{1.0, 0.0}, {0.0, 1.0}}, {{1.0, 0.0}, {0.0, 1.0}}};
  auto star = oracle::value_iteration(mdp);
  QCoefficients q;
  q.num_actions = 2;
  q.beta.resize(4);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) q.beta(a * 2 + s) = star[s][a];
  auto delta = td_errors(q, fixture::tabular_design(mdp), mdp.discount);
  EXPECT_LT(delta.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Fqi, ZeroRewardsGiveZeroBeta) {
  auto d = scenario_design(10, 10, 3, 1);
  d.rewards.setZero();
  auto q = fit_linear_fqi(d, FqiConfig{});
  EXPECT_TRUE(q.converged);
  EXPECT_EQ(q.beta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fqi, ZeroDiscountIsRidgeRegression) {
  auto d = scenario_design(20, 10, 3, 2);
  FqiConfig cfg;
  cfg.discount = 0.0;
  cfg.ridge = 0.0;
  auto q = fit_linear_fqi(d, cfg);
  ASSERT_TRUE(q.converged);
  auto res = estimating_equation_residual(q, d, 0.0);
  EXPECT_LT(res.norm(), 1e-8);
}

TEST(Fqi, ConvergedFitSolvesEstimatingEquation) {
  auto d = scenario_design(50, 20, 4, 3);
  FqiConfig cfg;
  cfg.ridge = 0.0;
  auto q = fit_linear_fqi(d, cfg);
  ASSERT_TRUE(q.converged) << q.diagnostic;
  EXPECT_LE(estimating_equation_residual(q, d, cfg.discount).norm(), 1e-6 * d.rows());
}

TEST(Fqi, TdErrorsMatchOracle) {
  auto ds = fixture::tiny_dataset(3, 8, 4);
  auto basis = sample_basis(2, 3, 1, 0.5, 6);
  auto d = LinearDesign::from_batch(slice_interval(ds, 0, 8), basis);
  QCoefficients q;
  q.num_actions = 2;
  q.beta = Eigen::VectorXd::LinSpaced(6, -1.0, 1.5);
  auto delta = td_errors(q, d, 0.9);
  oracle::Vec beta(q.beta.data(), q.beta.data() + 6);
  auto rows = oracle::rows_of(ds, 0, 8);
  // design rows follow slice_interval's order; match by (traj, time)
  auto batch = slice_interval(ds, 0, 8);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    oracle::Row row{batch.traj[r], batch.time[r]};
    EXPECT_NEAR(delta(static_cast<Eigen::Index>(r)), oracle::td(ds, basis, beta, 0.9, row), 1e-12);
  }
}

TEST(Fqi, ZeroBetaTdErrorsAreRewards) {
  auto d = scenario_design(5, 6, 2, 7);
  QCoefficients q;
  q.num_actions = 2;
  q.beta = Eigen::VectorXd::Zero(4);
  EXPECT_EQ(td_errors(q, d, 0.9), d.rewards);
}

TEST(Fqi, GreedyActionRules) {
  IndicatorBasis basis(2);
  QCoefficients q;
  q.num_actions = 2;
  q.beta = Eigen::VectorXd::Zero(4);
  const double s0[1] = {0.0};
  EXPECT_EQ(greedy_action(q, basis, s0), 0);
  q.beta << 1.0, 0.0, 2.0, 0.0;  // Q(1, 0) = 2 > Q(0, 0) = 1
  EXPECT_EQ(greedy_action(q, basis, s0), 1);
  q.beta.array() += 5.0;
  EXPECT_EQ(greedy_action(q, basis, s0), 1);
  EXPECT_DOUBLE_EQ(q_value(q, basis, 1, s0), 7.0);
}

TEST(Fqi, BellmanDesignMatrixOneMinusGamma) {
  LinearDesign d;
  d.num_actions = 2;
  d.phi = Eigen::MatrixXd::Ones(1, 1);
  d.phi_next = Eigen::MatrixXd::Ones(1, 1);
  d.actions = {0};
  d.rewards = Eigen::VectorXd::Ones(1);
  std::vector<int> pol{0};
  auto w = bellman_design_matrix(d, pol, 0.9);
  EXPECT_NEAR(w(0, 0), 0.1, 1e-15);
  EXPECT_EQ(w(1, 1), 0.0);
}

TEST(Fqi, CrossValidationSingleCandidate) {
  ScenarioSpec spec;
  spec.N = 20;
  spec.T = 20;
  spec.t_star = 20;
  auto ds = gen_scenario(spec, 5);
  std::vector<int> cands{6};
  EXPECT_EQ(cross_validate_basis(ds, 0, 20, cands, 5, FqiConfig{}, 9), 6);
}

TEST(Fqi, CrossValidationDeterministic) {
  ScenarioSpec spec;
  spec.N = 30;
  spec.T = 20;
  spec.t_star = 20;
  auto ds = gen_scenario(spec, 6);
  std::vector<int> cands{2, 4, 8};
  EXPECT_EQ(cross_validate_basis(ds, 0, 20, cands, 5, FqiConfig{}, 3),
            cross_validate_basis(ds, 0, 20, cands, 5, FqiConfig{}, 3));
}

TEST(Fqi, TrajectoryFoldsPartition) {
  auto folds = trajectory_folds(23, 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(23, 0);
  for (const auto& f : folds) {
    EXPECT_GE(f.size(), 4u);
    EXPECT_LE(f.size(), 5u);
    for (int i : f) ++seen[i];
  }
  for (int c : seen) EXPECT_EQ(c, 1);
}
