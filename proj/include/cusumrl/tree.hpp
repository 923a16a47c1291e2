#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "cusumrl/fqi.hpp"
#include "cusumrl/sieve.hpp"
#include "cusumrl/trajectory.hpp"

namespace cusumrl {

struct TreeParams {
  int max_depth = 3;
  int min_samples_leaf = 50;
};

/// CART regression tree: axis-aligned splits chosen by weighted variance
/// reduction, constant leaves. Rows carry nonnegative weights (multiplicities
/// of a resample); leaf size constraints count weight.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double weight = 0.0;
    int depth = 0;
  };

  double predict(std::span<const double> s) const;
  Eigen::VectorXd predict(const StateMatrix& x) const;
  int depth() const;
  std::vector<double> leaf_weights() const;
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend class TreeFitter;
  std::vector<Node> nodes_;
};

/// Sorts the design once so repeated fits on new responses (as in fitted
/// Q-iteration) skip the sort.
class TreeFitter {
 public:
  TreeFitter(StateMatrix x, std::vector<double> weights);
  RegressionTree fit(std::span<const double> y, const TreeParams& params) const;
  Eigen::Index rows() const { return x_.rows(); }

 private:
  int grow(RegressionTree& tree, std::vector<std::vector<int>>& order, std::span<const double> y,
           const TreeParams& params, int depth) const;

  StateMatrix x_;
  std::vector<double> w_;
  std::vector<std::vector<int>> sorted_;  // per feature
};

/// Greedy policy from one regression tree per action.
struct TreePolicy {
  std::vector<RegressionTree> trees;
  TreeParams params;
  double discount = 0.9;

  int num_actions() const { return static_cast<int>(trees.size()); }
  double q_value(int a, std::span<const double> s) const { return trees[a].predict(s); }
  int greedy_action(std::span<const double> s) const;
  /// rows x m
  Eigen::MatrixXd q_matrix(const StateMatrix& x) const;
};

/// Fitted Q-iteration with per-action regression trees, a fixed number of
/// sweeps from Q = 0. `weights` (optional, one per row) are multiplicities.
TreePolicy fit_tree_fqi(const TransitionBatch& batch, const TreeParams& params,
                        const FqiConfig& cfg, int iterations = 50,
                        std::span<const double> weights = {});

struct TreeCvGrid {
  std::vector<int> depths{3, 5, 6};
  std::vector<int> min_leaf{50, 60, 80};
};

/// Chooses tree hyperparameters minimizing the held-out squared TD error,
/// folds formed over trajectories.
TreeParams cross_validate_tree(const TransitionBatch& batch, const TreeCvGrid& grid, int folds,
                               const FqiConfig& cfg, int iterations, std::uint64_t seed,
                               std::span<const double> weights = {});

}  // namespace cusumrl
