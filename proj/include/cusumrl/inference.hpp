#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "cusumrl/fqi.hpp"
#include "cusumrl/teststat.hpp"
#include "cusumrl/trajectory.hpp"

namespace cusumrl {

struct BootstrapConfig {
  int B = 2000;
  std::uint64_t seed = 0;
  /// Draws processed together in one matrix product.
  int chunk = 128;
};

/// Standard normal multipliers of draw b, one per window row.
Eigen::VectorXd bootstrap_multipliers(std::uint64_t seed, int b, Eigen::Index rows);

/// c = W^-1 sum_rows phi_L(A,S) delta e / rows, so that the bootstrap
/// Q-function is phi_L(a,s)' c.
Eigen::VectorXd bootstrap_q_draw(const LinearDesign& segment, const Eigen::VectorXd& delta,
                                 const Eigen::MatrixXd& w_inv, std::span<const double> e);

struct BootstrapDraws {
  std::vector<double> draws[kNumStatKinds];
  const std::vector<double>& operator[](StatKind k) const { return draws[static_cast<int>(k)]; }
};

/// Bootstrap statistics for the kinds in `kinds` (others stay empty). Draw b
/// uses bootstrap_multipliers(cfg.seed, b, rows) over the whole window,
/// shared by every candidate split.
BootstrapDraws bootstrap_statistics(const WindowDesign& window, std::span<const SegmentFit> fits,
                                    const BootstrapConfig& cfg, std::span<const StatKind> kinds,
                                    int workers = 1);

/// (1 + #{draws >= ts}) / (B + 1)
double p_value(double ts, std::span<const double> draws);

/// min(1, q_tau{p_r / tau}) with q_tau the order statistic of rank ceil(tau r).
double aggregate_pvalues(std::span<const double> p, double tau);

struct TestConfig {
  FqiConfig fqi;
  ScanConfig scan;
  int bootstrap_b = 2000;
  int repetitions = 4;
  double tau = 0.1;
  bool standardize = true;
  /// Subtract the window's mean reward before fitting.
  bool center_rewards = true;
  /// Select M by K-fold cross-validation over `cv_candidates`; otherwise use
  /// `num_features`.
  bool cross_validate = true;
  std::vector<int> cv_candidates{4, 6, 8, 10};
  int cv_folds = 5;
  int num_features = 8;
  std::vector<StatKind> kinds{StatKind::Integral};
  int workers = 1;

  void validate() const;
};

struct TestResult {
  StatKind kind = StatKind::Integral;
  double statistic = 0.0;
  std::vector<double> draws;
  double p_value = 1.0;
  std::uint64_t seed = 0;
  int t0 = 0;
  int T = 0;
  std::vector<int> u_grid;
  int num_features = 0;
  double gamma = 0.0;
  bool converged = true;
  std::string diagnostic;

  nlohmann::json to_json(bool include_draws = false) const;
};

/// One repetition (one feature draw) of the test on [t0, T], for every
/// requested kind. `scan_out`, if given, receives the per-u observed values.
std::vector<TestResult> run_single_test(const Dataset& ds, int t0, int T, const TestConfig& cfg,
                                        std::uint64_t seed, ScanResult* scan_out = nullptr);

struct AggregatedTest {
  int t0 = 0;
  int T = 0;
  double tau = 0.1;
  std::uint64_t seed = 0;
  std::vector<StatKind> kinds;
  /// repetitions[r][k] for kind kinds[k]
  std::vector<std::vector<TestResult>> repetitions;
  /// Aggregated p-value per kind.
  std::vector<double> p_values;

  double p_value(StatKind kind) const;
  bool converged() const;
  nlohmann::json to_json(bool include_draws = false) const;
};

/// Rewards minus their mean over t in [t0, T).
Dataset center_rewards(const Dataset& ds, int t0, int T);

/// r repetitions with seeds derived from `seed`, p-values aggregated.
AggregatedTest run_test(const Dataset& ds, int t0, int T, const TestConfig& cfg, std::uint64_t seed);

}  // namespace cusumrl
