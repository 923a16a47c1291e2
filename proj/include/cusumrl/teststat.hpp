#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cusumrl/fqi.hpp"
#include "cusumrl/sieve.hpp"
#include "cusumrl/trajectory.hpp"

namespace cusumrl {

enum class StatKind { Integral = 0, Max = 1, NormalizedMax = 2 };

constexpr int kNumStatKinds = 3;

/// "integral", "max", "norm"
std::string to_string(StatKind kind);
StatKind parse_stat_kind(const std::string& name);

struct ScanConfig {
  double epsilon = 0.1;
  /// Spacing of candidate change points; 0 picks 1 for windows ending at or
  /// before 100 and ceil(T/100) beyond.
  int stride = 0;
  /// Time scale multiplying epsilon; 0 uses the window end T.
  int boundary_scale = 0;
  /// Explicit candidates override the generated grid.
  std::vector<int> u_grid;
};

/// Integers u with t0 + eps*scale < u < T - eps*scale, thinned to the stride.
std::vector<int> candidate_grid(int t0, int T, const ScanConfig& cfg);

/// sqrt((u - t0)(T - u)) / (T - t0)
double cusum_weight(int u, int t0, int T);

/// The transitions of a window [t0, T] with rows ordered time-major, row
/// (t - t0) * N + i for t = t0 .. T-1. Any split point u cuts it into two
/// contiguous blocks.
struct WindowDesign {
  int t0 = 0;
  int T = 0;
  int num_trajectories = 0;
  LinearDesign design;

  int num_actions() const { return design.num_actions; }
  Eigen::Index rows_before(int u) const {
    return static_cast<Eigen::Index>(u - t0) * num_trajectories;
  }
  LinearDesign left(int u) const { return design.middle_rows(0, rows_before(u)); }
  LinearDesign right(int u) const {
    return design.middle_rows(rows_before(u), design.rows() - rows_before(u));
  }
};

WindowDesign make_window(const Dataset& ds, int t0, int T, const FeatureMap& map);

/// Normalized (1/rows) version of bellman_design_matrix with the greedy
/// next-state policy of q.
Eigen::MatrixXd w_hat(const LinearDesign& segment, const QCoefficients& q, double discount);

/// Inverse of a W-hat, retrying once with a small ridge when it is
/// numerically singular.
Eigen::MatrixXd invert_w(const Eigen::MatrixXd& w);

/// Per-segment sandwich covariance of the coefficient estimate:
/// W^-1 [sum phi phi' delta^2] W^-T / rows^2.
Eigen::MatrixXd segment_covariance(const LinearDesign& segment, const Eigen::VectorXd& delta,
                                   const Eigen::MatrixXd& w_inv);

struct SegmentFit {
  int u = 0;
  QCoefficients left;
  QCoefficients right;
  Eigen::MatrixXd w_left, w_right;
  Eigen::MatrixXd w_left_inv, w_right_inv;
  Eigen::VectorXd delta_left, delta_right;
  Eigen::MatrixXd cov_left, cov_right;

  bool converged() const { return left.converged && right.converged; }
};

SegmentFit fit_segment(const WindowDesign& window, int u, const FqiConfig& cfg);
std::vector<SegmentFit> fit_segments(const WindowDesign& window, std::span<const int> u_grid,
                                     const FqiConfig& cfg, int workers = 1);

/// sigma-hat_u(a, s) for the split held in fit.
double sigma_hat(const SegmentFit& fit, const FeatureMap& map, int a, std::span<const double> s);

struct ScanPoint {
  int u = 0;
  double weight = 0.0;
  /// Weighted per-u values, indexed by StatKind.
  double value[kNumStatKinds] = {0.0, 0.0, 0.0};
};

struct ScanResult {
  std::vector<ScanPoint> points;
  /// Max over u, indexed by StatKind.
  double statistic[kNumStatKinds] = {0.0, 0.0, 0.0};
  double operator[](StatKind k) const { return statistic[static_cast<int>(k)]; }
};

constexpr double kSigmaFloor = 1e-8;

/// All three statistics from one set of fits. The integral form averages
/// |dQ| over observed (A, S) pairs with 1/(N T) scaling; the max forms range
/// over every observed state in the window crossed with every action.
ScanResult scan_statistics(const WindowDesign& window, std::span<const SegmentFit> fits);

double ts_integral(const WindowDesign& window, std::span<const SegmentFit> fits);
double ts_max(const WindowDesign& window, std::span<const SegmentFit> fits);
double ts_norm(const WindowDesign& window, std::span<const SegmentFit> fits);

/// u,weight,integral,max,norm
void write_scan_csv(const std::filesystem::path& path, const ScanResult& scan);

}  // namespace cusumrl
