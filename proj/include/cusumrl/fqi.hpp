#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cusumrl/sieve.hpp"
#include "cusumrl/trajectory.hpp"

namespace cusumrl {

/// Ill-conditioned or singular linear systems.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FqiConfig {
  double discount = 0.9;
  double tol = 1e-4;
  /// 0 selects max(200, 20*ceil(ln(rows))).
  int k_max = 0;
  /// Negative selects 1e-8 * mean(diag(Gram)).
  double ridge = -1.0;
  /// Once the greedy policy on the next states stops changing, solve the
  /// fixed-point equation for that policy directly and accept it if the
  /// policy is self-consistent. Reaches the same fixed point as plain
  /// iteration in far fewer sweeps.
  bool accelerate = true;
  /// Refits after divergence (iterates blowing up), each time with the ridge
  /// multiplied by 10. An explicit zero ridge stays zero.
  int ridge_escalations = 6;

  void validate() const;
  int resolved_k_max(std::size_t rows) const;
};

/// Precomputed Phi(S) and Phi(S') for a set of transitions.
struct LinearDesign {
  int num_actions = 2;
  Eigen::MatrixXd phi;       // rows x M
  Eigen::MatrixXd phi_next;  // rows x M
  std::vector<int> actions;
  Eigen::VectorXd rewards;

  Eigen::Index rows() const { return phi.rows(); }
  int num_features() const { return static_cast<int>(phi.cols()); }
  int basis_length() const { return num_actions * num_features(); }

  static LinearDesign from_batch(const TransitionBatch& batch, const FeatureMap& map);
  LinearDesign middle_rows(Eigen::Index begin, Eigen::Index count) const;
};

/// Sieve Q-estimate phi_L(a,s)' beta over an interval [t1, t2].
struct QCoefficients {
  Eigen::VectorXd beta;
  int num_actions = 2;
  int t1 = 0;
  int t2 = 0;
  std::uint64_t spec_id = 0;
  int iterations = 0;
  bool converged = false;
  double last_delta = 0.0;
  /// Ridge actually used and how many times it was raised.
  double ridge = 0.0;
  int escalations = 0;
  std::string diagnostic;

  int num_features() const { return static_cast<int>(beta.size()) / num_actions; }
  /// M x m matrix whose column a is the coefficient block of action a.
  Eigen::Map<const Eigen::MatrixXd> blocks() const {
    return {beta.data(), num_features(), num_actions};
  }
};

struct FqiTrace {
  std::vector<Eigen::VectorXd> iterates;
};

QCoefficients fit_linear_fqi(const LinearDesign& design, const FqiConfig& cfg,
                             FqiTrace* trace = nullptr);
QCoefficients fit_linear_fqi(const TransitionBatch& batch, const FeatureMap& map,
                             const FqiConfig& cfg);

/// rows x m matrix of Q-values for feature rows `phi`.
Eigen::MatrixXd q_values(const QCoefficients& q, const Eigen::MatrixXd& phi);
/// Row-wise argmax, ties to the lowest action.
std::vector<int> greedy_actions(const Eigen::MatrixXd& qvals);

double q_value(const QCoefficients& q, const FeatureMap& map, int a, std::span<const double> s);
int greedy_action(const QCoefficients& q, const FeatureMap& map, std::span<const double> s);

/// delta = R + gamma max_a Q(a,S') - Q(A,S), one per design row.
Eigen::VectorXd td_errors(const QCoefficients& q, const LinearDesign& design, double discount);
Eigen::VectorXd td_errors(const QCoefficients& q, const FeatureMap& map,
                          const TransitionBatch& batch, const FqiConfig& cfg);

/// sum_rows phi_L(A,S) delta (length m*M).
Eigen::VectorXd estimating_equation_residual(const QCoefficients& q, const LinearDesign& design,
                                             double discount);
Eigen::VectorXd estimating_equation_residual(const QCoefficients& q, const FeatureMap& map,
                                             const TransitionBatch& batch, const FqiConfig& cfg);

/// sum_rows phi_L(A,S) {phi_L(A,S) - gamma phi_L(pi(S'),S')}' for a given
/// next-state policy (unnormalized, L x L).
Eigen::MatrixXd bellman_design_matrix(const LinearDesign& design, std::span<const int> next_policy,
                                      double discount);

struct BasisCvResult {
  int selected = 0;
  std::vector<int> candidates;
  std::vector<double> criterion;
};

/// K-fold selection of the number of features per action. Trajectories (not
/// time points) are split into folds; every candidate uses the same
/// bandwidth and basis seed, so candidate bases are nested.
BasisCvResult cross_validate_basis(const Dataset& ds, int t1, int t2,
                                   std::span<const int> candidate_features, int folds,
                                   const FqiConfig& cfg, double gamma, std::uint64_t basis_seed,
                                   std::uint64_t fold_seed);
/// Same, with the bandwidth from the median heuristic on the interval's states.
int cross_validate_basis(const Dataset& ds, int t1, int t2, std::span<const int> candidate_features,
                         int folds, const FqiConfig& cfg, std::uint64_t seed);

/// Seeded assignment of trajectories to `folds` groups of near-equal size.
std::vector<std::vector<int>> trajectory_folds(int num_trajectories, int folds, std::uint64_t seed);

}  // namespace cusumrl
