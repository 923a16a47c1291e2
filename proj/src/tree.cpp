#include "cusumrl/tree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace cusumrl {

double RegressionTree::predict(std::span<const double> s) const {
  if (nodes_.empty()) return 0.0;
  int k = 0;
  while (nodes_[k].feature >= 0)
    k = s[nodes_[k].feature] <= nodes_[k].threshold ? nodes_[k].left : nodes_[k].right;
  return nodes_[k].value;
}

Eigen::VectorXd RegressionTree::predict(const StateMatrix& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out(r) = predict(std::span<const double>(x.row(r).data(), static_cast<std::size_t>(x.cols())));
  return out;
}

int RegressionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<double> RegressionTree::leaf_weights() const {
  std::vector<double> out;
  for (const auto& n : nodes_)
    if (n.feature < 0) out.push_back(n.weight);
  return out;
}

TreeFitter::TreeFitter(StateMatrix x, std::vector<double> weights)
    : x_(std::move(x)), w_(std::move(weights)) {
  if (w_.empty()) w_.assign(static_cast<std::size_t>(x_.rows()), 1.0);
  if (static_cast<Eigen::Index>(w_.size()) != x_.rows())
    throw std::invalid_argument("TreeFitter: one weight per row required");
  sorted_.resize(static_cast<std::size_t>(x_.cols()));
  for (Eigen::Index k = 0; k < x_.cols(); ++k) {
    auto& idx = sorted_[k];
    idx.resize(static_cast<std::size_t>(x_.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return x_(a, k) < x_(b, k); });
  }
}

RegressionTree TreeFitter::fit(std::span<const double> y, const TreeParams& params) const {
  if (static_cast<Eigen::Index>(y.size()) != x_.rows())
    throw std::invalid_argument("TreeFitter: response length mismatch");
  RegressionTree tree;
  auto order = sorted_;
  // drop zero-weight rows so they never influence thresholds
  for (auto& idx : order)
    idx.erase(std::remove_if(idx.begin(), idx.end(), [&](int r) { return w_[r] <= 0.0; }),
              idx.end());
  grow(tree, order, y, params, 0);
  return tree;
}

int TreeFitter::grow(RegressionTree& tree, std::vector<std::vector<int>>& order,
                     std::span<const double> y, const TreeParams& params, int depth) const {
  const int id = static_cast<int>(tree.nodes_.size());
  tree.nodes_.emplace_back();
  double wsum = 0.0, ysum = 0.0;
  const auto& rows = order.empty() ? std::vector<int>{} : order[0];
  for (int r : rows) {
    wsum += w_[r];
    ysum += w_[r] * y[r];
  }
  {
    auto& node = tree.nodes_[id];
    node.depth = depth;
    node.weight = wsum;
    node.value = wsum > 0.0 ? ysum / wsum : 0.0;
  }
  const double min_leaf = std::max(1, params.min_samples_leaf);
  if (depth >= params.max_depth || wsum < 2.0 * min_leaf || rows.size() < 2) return id;

  const double parent_score = ysum * ysum / wsum;
  double best_gain = 1e-12 * std::max(1.0, std::abs(parent_score));
  int best_feature = -1;
  double best_threshold = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& idx = order[k];
    double wl = 0.0, yl = 0.0;
    for (std::size_t p = 0; p + 1 < idx.size(); ++p) {
      const int r = idx[p];
      wl += w_[r];
      yl += w_[r] * y[r];
      const double xv = x_(r, static_cast<Eigen::Index>(k));
      const double xnext = x_(idx[p + 1], static_cast<Eigen::Index>(k));
      if (!(xnext > xv)) continue;
      const double wr = wsum - wl;
      if (wl < min_leaf || wr < min_leaf) continue;
      const double yr = ysum - yl;
      const double gain = yl * yl / wl + yr * yr / wr - parent_score;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = static_cast<int>(k);
        best_threshold = 0.5 * (xv + xnext);
      }
    }
  }
  if (best_feature < 0) return id;

  std::vector<std::vector<int>> left(order.size()), right(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    left[k].reserve(order[k].size());
    right[k].reserve(order[k].size());
    for (int r : order[k])
      (x_(r, best_feature) <= best_threshold ? left[k] : right[k]).push_back(r);
  }
  order.clear();
  order.shrink_to_fit();
  const int l = grow(tree, left, y, params, depth + 1);
  const int rr = grow(tree, right, y, params, depth + 1);
  auto& node = tree.nodes_[id];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = l;
  node.right = rr;
  return id;
}

int TreePolicy::greedy_action(std::span<const double> s) const {
  int best = 0;
  double v = trees[0].predict(s);
  for (int a = 1; a < num_actions(); ++a) {
    const double q = trees[a].predict(s);
    if (q > v) {
      v = q;
      best = a;
    }
  }
  return best;
}

Eigen::MatrixXd TreePolicy::q_matrix(const StateMatrix& x) const {
  Eigen::MatrixXd q(x.rows(), num_actions());
  for (int a = 0; a < num_actions(); ++a) q.col(a) = trees[a].predict(x);
  return q;
}

namespace {

struct TreeProblem {
  StateMatrix x, x_next;
  std::vector<int> a;
  std::vector<double> r, w;
  int num_actions = 2;
};

TreeProblem make_problem(const TransitionBatch& batch, std::span<const double> weights,
                         const std::vector<std::size_t>* rows = nullptr) {
  TreeProblem p;
  p.num_actions = batch.num_actions;
  const std::size_t n = rows ? rows->size() : batch.size();
  p.x.resize(static_cast<Eigen::Index>(n), batch.state_dim);
  p.x_next.resize(static_cast<Eigen::Index>(n), batch.state_dim);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = rows ? (*rows)[k] : k;
    for (int j = 0; j < batch.state_dim; ++j) {
      p.x(static_cast<Eigen::Index>(k), j) = batch.state(src)[j];
      p.x_next(static_cast<Eigen::Index>(k), j) = batch.next_state(src)[j];
    }
    p.a.push_back(batch.a[src]);
    p.r.push_back(batch.r[src]);
    p.w.push_back(weights.empty() ? 1.0 : weights[src]);
  }
  return p;
}

TreePolicy fit_problem(const TreeProblem& p, const TreeParams& params, const FqiConfig& cfg,
                       int iterations) {
  const int m = p.num_actions;
  std::vector<std::vector<int>> idx(m);
  for (std::size_t k = 0; k < p.a.size(); ++k) idx[p.a[k]].push_back(static_cast<int>(k));
  std::vector<TreeFitter> fitters;
  fitters.reserve(m);
  for (int a = 0; a < m; ++a) {
    StateMatrix xa(static_cast<Eigen::Index>(idx[a].size()), p.x.cols());
    std::vector<double> wa;
    for (std::size_t k = 0; k < idx[a].size(); ++k) {
      xa.row(static_cast<Eigen::Index>(k)) = p.x.row(idx[a][k]);
      wa.push_back(p.w[idx[a][k]]);
    }
    fitters.emplace_back(std::move(xa), std::move(wa));
  }
  TreePolicy policy;
  policy.params = params;
  policy.discount = cfg.discount;
  policy.trees.assign(m, RegressionTree{});
  std::vector<double> ya;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd vmax = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.a.size()));
    if (it > 0) vmax = policy.q_matrix(p.x_next).rowwise().maxCoeff();
    std::vector<RegressionTree> next(m);
    for (int a = 0; a < m; ++a) {
      ya.resize(idx[a].size());
      for (std::size_t k = 0; k < idx[a].size(); ++k)
        ya[k] = p.r[idx[a][k]] + cfg.discount * vmax(idx[a][k]);
      next[a] = fitters[a].fit(ya, params);
    }
    policy.trees = std::move(next);
  }
  return policy;
}

}  // namespace

TreePolicy fit_tree_fqi(const TransitionBatch& batch, const TreeParams& params,
                        const FqiConfig& cfg, int iterations, std::span<const double> weights) {
  if (batch.size() == 0) throw std::invalid_argument("fit_tree_fqi: empty batch");
  if (!weights.empty() && weights.size() != batch.size())
    throw std::invalid_argument("fit_tree_fqi: one weight per row required");
  if (iterations < 1) throw std::invalid_argument("fit_tree_fqi: iterations must be positive");
  return fit_problem(make_problem(batch, weights), params, cfg, iterations);
}

TreeParams cross_validate_tree(const TransitionBatch& batch, const TreeCvGrid& grid, int folds,
                               const FqiConfig& cfg, int iterations, std::uint64_t seed,
                               std::span<const double> weights) {
  if (grid.depths.empty() || grid.min_leaf.empty())
    throw std::invalid_argument("cross_validate_tree: empty grid");
  if (grid.depths.size() * grid.min_leaf.size() == 1)
    return TreeParams{grid.depths[0], grid.min_leaf[0]};
  int max_traj = 0;
  for (int i : batch.traj) max_traj = std::max(max_traj, i);
  const auto assignment = trajectory_folds(max_traj + 1, folds, seed);
  std::vector<int> fold_of(max_traj + 1);
  for (int f = 0; f < folds; ++f)
    for (int i : assignment[f]) fold_of[i] = f;
  std::vector<std::vector<std::size_t>> held(folds), kept(folds);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const int f = fold_of[batch.traj[r]];
    for (int g = 0; g < folds; ++g) (g == f ? held[g] : kept[g]).push_back(r);
  }
  std::vector<TreeProblem> train, test;
  for (int f = 0; f < folds; ++f) {
    train.push_back(make_problem(batch, weights, &kept[f]));
    test.push_back(make_problem(batch, weights, &held[f]));
  }
  double best = std::numeric_limits<double>::infinity();
  TreeParams chosen{grid.depths[0], grid.min_leaf[0]};
  for (int depth : grid.depths)
    for (int leaf : grid.min_leaf) {
      const TreeParams params{depth, leaf};
      double total = 0.0;
      for (int f = 0; f < folds; ++f) {
        if (train[f].a.empty() || test[f].a.empty()) continue;
        const TreePolicy pol = fit_problem(train[f], params, cfg, iterations);
        const Eigen::MatrixXd qs = pol.q_matrix(test[f].x);
        const Eigen::VectorXd vn = pol.q_matrix(test[f].x_next).rowwise().maxCoeff();
        for (std::size_t k = 0; k < test[f].a.size(); ++k) {
          const double d = test[f].r[k] + cfg.discount * vn(static_cast<Eigen::Index>(k)) -
                           qs(static_cast<Eigen::Index>(k), test[f].a[k]);
          total += test[f].w[k] * d * d;
        }
      }
      if (total < best) {
        best = total;
        chosen = params;
      }
    }
  return chosen;
}

}  // namespace cusumrl
