#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <span>
#include <vector>

#include "cusumrl/inference.hpp"
#include "cusumrl/trajectory.hpp"

namespace cusumrl {

struct ChangePointResult {
  int t0 = 0;
  int T = 0;
  std::vector<int> kappas;
  /// One per tested kappa, in order; shorter than kappas after an early exit.
  std::vector<double> p_values;
  double alpha = 0.05;
  /// Index into kappas of the first rejection, -1 if none.
  int j0 = -1;
  int t_hat = 0;
  bool no_stationary_prefix = false;

  bool rejected(std::size_t k) const { return p_values[k] < alpha; }
  nlohmann::json to_json() const;
};

/// lo, lo + step, ... up to and including hi.
std::vector<int> kappa_grid(int lo, int hi, int step);

/// Applies the stopping rule to p-values already computed for a prefix of
/// `kappas`.
ChangePointResult decide_change_point(int t0, int T, std::span<const int> kappas,
                                      std::span<const double> p_values, double alpha);

/// Aggregated p-value for the window [T - kappa, T] given a seed.
using WindowTest = std::function<double(int window_start, int T, std::uint64_t seed)>;

/// Tests [T - kappa, T] for increasing kappa, the seed of each window derived
/// from (master_seed, kappa). With early_exit the scan stops at the first
/// rejection.
ChangePointResult scan_change_points(int t0, int T, std::span<const int> kappas, double alpha,
                                     bool early_exit, const WindowTest& test,
                                     std::uint64_t master_seed);

std::uint64_t kappa_seed(std::uint64_t master_seed, int kappa);

struct DetectConfig {
  std::vector<int> kappas = kappa_grid(25, 75, 5);
  double alpha = 0.05;
  StatKind kind = StatKind::Integral;
  bool early_exit = true;
  TestConfig test;
};

/// Sequential detection on data over [t0, T] using run_test.
ChangePointResult detect_change_point(const Dataset& ds, int t0, int T, const DetectConfig& cfg,
                                      std::uint64_t master_seed);

/// kappa,p_value,rejected
void write_detect_csv(const std::filesystem::path& path, const ChangePointResult& result);

}  // namespace cusumrl
