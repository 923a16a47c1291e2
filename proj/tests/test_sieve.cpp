#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cusumrl/sieve.hpp"
#include "oracles.hpp"

using namespace cusumrl;

TEST(Sieve, MedianHeuristicSinglePair) {
  StateMatrix x(2, 1);
  x << 0.0, 2.0;
  EXPECT_DOUBLE_EQ(median_heuristic_gamma(x), 0.125);
}

TEST(Sieve, MedianHeuristicLowerMedian) {
  StateMatrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  EXPECT_DOUBLE_EQ(median_heuristic_gamma(x), 0.5);
}

TEST(Sieve, MedianHeuristicDegenerate) {
  StateMatrix x = StateMatrix::Constant(4, 2, 1.5);
  EXPECT_THROW(median_heuristic_gamma(x), std::invalid_argument);
}

TEST(Sieve, MedianHeuristicMatchesAllPairs) {
  std::mt19937_64 g(5);
  std::normal_distribution<double> n(0.0, 1.0);
  StateMatrix x(1000, 2);
  for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, 0) = n(g), x(r, 1) = n(g);
  std::vector<double> d;
  for (Eigen::Index a = 0; a < x.rows(); ++a)
    for (Eigen::Index b = a + 1; b < x.rows(); ++b) d.push_back((x.row(a) - x.row(b)).norm());
  std::nth_element(d.begin(), d.begin() + (d.size() - 1) / 2, d.end());
  const double med = d[(d.size() - 1) / 2];
  const double exact = 1.0 / (2.0 * med * med);
  EXPECT_NEAR(median_heuristic_gamma(x, 3) / exact, 1.0, 0.15);
}

TEST(Sieve, SampleBasisDeterministic) {
  auto a = sample_basis(2, 6, 3, 0.7, 42);
  auto b = sample_basis(2, 6, 3, 0.7, 42);
  auto c = sample_basis(2, 6, 3, 0.7, 43);
  EXPECT_EQ(a.frequencies, b.frequencies);
  EXPECT_EQ(a.offsets, b.offsets);
  EXPECT_NE(a.frequencies, c.frequencies);
  for (Eigen::Index j = 0; j < a.offsets.size(); ++j) {
    EXPECT_GE(a.offsets(j), 0.0);
    EXPECT_LT(a.offsets(j), 2.0 * std::numbers::pi);
  }
}

TEST(Sieve, BasesAreNestedInM) {
  auto small = sample_basis(2, 4, 2, 0.3, 9);
  auto large = sample_basis(2, 10, 2, 0.3, 9);
  EXPECT_EQ(small.frequencies, large.frequencies.topRows(4));
  EXPECT_EQ(small.offsets, large.offsets.head(4));
}

TEST(Sieve, SingleFeatureClosedForms) {
  BasisSpec spec;
  spec.num_features = 1;
  spec.dim = 1;
  spec.frequencies = Eigen::MatrixXd::Zero(1, 1);
  spec.offsets = Eigen::VectorXd::Zero(1);
  const double s[1] = {3.7};
  EXPECT_DOUBLE_EQ(phi_features(spec, s)(0), std::sqrt(2.0));
  spec.offsets(0) = std::numbers::pi;
  EXPECT_NEAR(phi_features(spec, s)(0), -std::sqrt(2.0), 1e-15);
}

TEST(Sieve, FeatureBound) {
  auto spec = sample_basis(2, 7, 2, 1.3, 1);
  std::mt19937_64 g(2);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const double s[2] = {n(g), n(g)};
    auto f = phi_features(spec, s);
    EXPECT_LE(f.cwiseAbs().maxCoeff(), std::sqrt(2.0 / 7) + 1e-15);
    EXPECT_LE(f.norm(), std::sqrt(2.0) + 1e-12);
  }
}

TEST(Sieve, FeaturesMatchOracle) {
  auto spec = sample_basis(3, 5, 2, 0.4, 77);
  const double s[2] = {0.3, -1.1};
  auto f = phi_features(spec, s);
  auto o = oracle::rff(spec, s);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(f(j), o[j], 1e-14);
}

TEST(Sieve, PhiLBlockPlacement) {
  auto spec = sample_basis(2, 2, 1, 0.5, 3);
  const double s[1] = {0.8};
  auto z = phi_features(spec, s);
  auto v1 = phi_L(spec, 2, 1, s);
  auto v0 = phi_L(spec, 2, 0, s);
  ASSERT_EQ(v1.size(), 4);
  EXPECT_EQ(v1(0), 0.0);
  EXPECT_EQ(v1(1), 0.0);
  EXPECT_EQ(v1(2), z(0));
  EXPECT_EQ(v1(3), z(1));
  EXPECT_EQ(v0(0), z(0));
  EXPECT_EQ(v0(3), 0.0);
  EXPECT_EQ(v0.dot(v1), 0.0);
  EXPECT_THROW(phi_L(spec, 2, 2, s), std::invalid_argument);
}

TEST(Sieve, SaveLoadRoundTrip) {
  auto spec = sample_basis(2, 5, 3, 0.9, 8);
  auto path = std::filesystem::temp_directory_path() / "cusumrl_basis.json";
  spec.save(path);
  auto back = BasisSpec::load(path);
  EXPECT_EQ(back.frequencies, spec.frequencies);
  EXPECT_EQ(back.offsets, spec.offsets);
  EXPECT_EQ(back.gamma, spec.gamma);
  EXPECT_EQ(back.seed, spec.seed);
}

TEST(Sieve, KernelApproximationAtUnitDistance) {
  auto spec = sample_basis(2, 5000, 2, 0.5, 123);
  const double x[2] = {0.2, -0.4};
  const double y[2] = {0.2 + 0.6, -0.4 + 0.8};
  const double k = phi_features(spec, x).dot(phi_features(spec, y));
  EXPECT_NEAR(k, std::exp(-0.5), 0.05);
}
