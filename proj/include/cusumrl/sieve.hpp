#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "cusumrl/trajectory.hpp"

namespace cusumrl {

using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A state feature map Phi: R^d -> R^M. The action-expanded basis phi_L
/// places Phi(s) in block a of an m*M vector.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;
  virtual int size() const = 0;
  virtual int state_dim() const = 0;
  /// Rows of `states` mapped to rows of the result (n x M).
  virtual Eigen::MatrixXd evaluate(const StateMatrix& states) const = 0;
  /// Identifies the feature draw, for audit trails.
  virtual std::uint64_t id() const { return 0; }

  Eigen::VectorXd evaluate_one(std::span<const double> s) const;
};

/// Random Fourier features Phi_j(s) = sqrt(2/M) cos(w_j's + b_j) with
/// w_j ~ N(0, 2*gamma*I) and b_j ~ U[0, 2pi), approximating the RBF kernel
/// exp(-gamma |x-y|^2).
struct BasisSpec final : FeatureMap {
  int num_actions = 2;
  int num_features = 1;
  int dim = 1;
  Eigen::MatrixXd frequencies;  // M x d
  Eigen::VectorXd offsets;      // M
  double gamma = 1.0;
  std::uint64_t seed = 0;

  int size() const override { return num_features; }
  int state_dim() const override { return dim; }
  Eigen::MatrixXd evaluate(const StateMatrix& states) const override;
  std::uint64_t id() const override { return seed; }
  int basis_length() const { return num_actions * num_features; }

  void save(const std::filesystem::path& path) const;
  static BasisSpec load(const std::filesystem::path& path);
};

/// One-hot encoding of a discrete state stored as an integer-valued scalar in
/// s[0]. Used for tabular problems where Q is exactly representable.
struct IndicatorBasis final : FeatureMap {
  int num_states = 1;
  explicit IndicatorBasis(int n) : num_states(n) {}
  int size() const override { return num_states; }
  int state_dim() const override { return 1; }
  Eigen::MatrixXd evaluate(const StateMatrix& states) const override;
};

/// gamma = 1 / (2 med^2), med the lower median of pairwise Euclidean
/// distances over a seeded uniform subsample of at most `max_points` rows.
/// Throws std::invalid_argument if all points coincide.
double median_heuristic_gamma(const StateMatrix& states, std::uint64_t seed = 0,
                              int max_points = 1000);

BasisSpec sample_basis(int num_actions, int num_features, int dim, double gamma,
                       std::uint64_t seed);

Eigen::VectorXd phi_features(const BasisSpec& spec, std::span<const double> s);

/// [1{a=0} Phi(s)', ..., 1{a=m-1} Phi(s)']'.
Eigen::VectorXd phi_L(const FeatureMap& map, int num_actions, int a, std::span<const double> s);

/// Copies states t in [t1, t2] of every trajectory, t-major (row (t-t1)*N + i).
StateMatrix states_time_major(const Dataset& ds, int t1, int t2);

}  // namespace cusumrl
