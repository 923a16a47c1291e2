#include "cusumrl/fqi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cusumrl/random.hpp"

namespace cusumrl {

void FqiConfig::validate() const {
  if (!(discount >= 0.0 && discount < 1.0))
    throw std::invalid_argument("FqiConfig: discount must lie in [0, 1)");
  if (!(tol > 0.0)) throw std::invalid_argument("FqiConfig: tol must be positive");
  if (k_max < 0) throw std::invalid_argument("FqiConfig: k_max must be >= 1 (or 0 for auto)");
  if (ridge_escalations < 0) throw std::invalid_argument("FqiConfig: ridge_escalations must be >= 0");
}

int FqiConfig::resolved_k_max(std::size_t rows) const {
  if (k_max > 0) return k_max;
  const double lg = std::log(std::max<double>(2.0, static_cast<double>(rows)));
  return std::max(200, 20 * static_cast<int>(std::ceil(lg)));
}

LinearDesign LinearDesign::from_batch(const TransitionBatch& batch, const FeatureMap& map) {
  if (batch.state_dim != map.state_dim())
    throw std::invalid_argument("design: batch state dimension differs from feature map");
  const auto n = static_cast<Eigen::Index>(batch.size());
  StateMatrix s = Eigen::Map<const StateMatrix>(batch.s.data(), n, batch.state_dim);
  StateMatrix sn = Eigen::Map<const StateMatrix>(batch.s_next.data(), n, batch.state_dim);
  LinearDesign d;
  d.num_actions = batch.num_actions;
  d.phi = map.evaluate(s);
  d.phi_next = map.evaluate(sn);
  d.actions = batch.a;
  d.rewards = Eigen::Map<const Eigen::VectorXd>(batch.r.data(), n);
  return d;
}

LinearDesign LinearDesign::middle_rows(Eigen::Index begin, Eigen::Index count) const {
  LinearDesign d;
  d.num_actions = num_actions;
  d.phi = phi.middleRows(begin, count);
  d.phi_next = phi_next.middleRows(begin, count);
  d.actions.assign(actions.begin() + begin, actions.begin() + begin + count);
  d.rewards = rewards.segment(begin, count);
  return d;
}

namespace {

LinearDesign select_rows(const LinearDesign& src, const std::vector<Eigen::Index>& rows) {
  LinearDesign d;
  d.num_actions = src.num_actions;
  d.phi = src.phi(rows, Eigen::all);
  d.phi_next = src.phi_next(rows, Eigen::all);
  d.rewards = src.rewards(rows);
  d.actions.reserve(rows.size());
  for (auto r : rows) d.actions.push_back(src.actions[r]);
  return d;
}

std::vector<std::vector<Eigen::Index>> rows_by_action(const LinearDesign& d) {
  std::vector<std::vector<Eigen::Index>> idx(d.num_actions);
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    const int a = d.actions[r];
    if (a < 0 || a >= d.num_actions) throw std::invalid_argument("design: action out of range");
    idx[a].push_back(r);
  }
  return idx;
}

void row_max(const Eigen::MatrixXd& q, Eigen::VectorXd& vmax, std::vector<int>& arg) {
  const auto n = q.rows();
  vmax.resize(n);
  arg.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    int best = 0;
    double v = q(r, 0);
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(r, a) > v) {
        v = q(r, a);
        best = static_cast<int>(a);
      }
    vmax(r) = v;
    arg[r] = best;
  }
}

// sum over rows with (A=a, pi=a') of Phi(S) Phi(S')', arranged in an L x L matrix.
Eigen::MatrixXd cross_design(const LinearDesign& d,
                             const std::vector<std::vector<Eigen::Index>>& by_action,
                             std::span<const int> policy) {
  const int m = d.num_actions, M = d.num_features();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m) * M,
                                            static_cast<Eigen::Index>(m) * M);
  for (int a = 0; a < m; ++a) {
    std::vector<std::vector<Eigen::Index>> groups(m);
    for (auto r : by_action[a]) groups[policy[r]].push_back(r);
    for (int b = 0; b < m; ++b) {
      if (groups[b].empty()) continue;
      Eigen::MatrixXd p = d.phi(groups[b], Eigen::all);
      Eigen::MatrixXd pn = d.phi_next(groups[b], Eigen::all);
      c.block(static_cast<Eigen::Index>(a) * M, static_cast<Eigen::Index>(b) * M, M, M).noalias() =
          p.transpose() * pn;
    }
  }
  return c;
}

}  // namespace

Eigen::MatrixXd bellman_design_matrix(const LinearDesign& design, std::span<const int> next_policy,
                                      double discount) {
  if (static_cast<Eigen::Index>(next_policy.size()) != design.rows())
    throw std::invalid_argument("bellman_design_matrix: policy length mismatch");
  const auto by_action = rows_by_action(design);
  const int M = design.num_features();
  Eigen::MatrixXd w = -discount * cross_design(design, by_action, next_policy);
  for (int a = 0; a < design.num_actions; ++a) {
    if (by_action[a].empty()) continue;
    Eigen::MatrixXd p = design.phi(by_action[a], Eigen::all);
    w.block(static_cast<Eigen::Index>(a) * M, static_cast<Eigen::Index>(a) * M, M, M).noalias() +=
        p.transpose() * p;
  }
  return w;
}

namespace {

QCoefficients fit_once(const LinearDesign& design, const FqiConfig& cfg, double ridge_scale,
                       FqiTrace* trace, bool& diverged) {
  diverged = false;
  const Eigen::Index n = design.rows();
  if (n == 0) throw std::invalid_argument("fit_linear_fqi: empty batch");
  const int m = design.num_actions, M = design.num_features();
  const Eigen::Index L = static_cast<Eigen::Index>(m) * M;
  const double gamma = cfg.discount;

  const auto by_action = rows_by_action(design);
  std::vector<Eigen::MatrixXd> phi_a(m);
  std::vector<Eigen::MatrixXd> gram(m);
  double diag_sum = 0.0;
  for (int a = 0; a < m; ++a) {
    phi_a[a] = design.phi(by_action[a], Eigen::all);
    gram[a] = phi_a[a].transpose() * phi_a[a];
    diag_sum += gram[a].trace();
  }
  double ridge = cfg.ridge * ridge_scale;
  if (ridge < 0.0) {
    const double mean_diag = diag_sum / static_cast<double>(L);
    ridge = (mean_diag > 0.0 ? 1e-8 * mean_diag : 1e-8) * ridge_scale;
  }
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol(m);
  std::vector<Eigen::VectorXd> rhs_reward(m);
  for (int a = 0; a < m; ++a) {
    Eigen::MatrixXd g = gram[a];
    g.diagonal().array() += ridge;
    chol[a].compute(g);
    if (chol[a].info() != Eigen::Success || !(chol[a].rcond() > 1e-14))
      throw NumericError("fit_linear_fqi: Gram matrix for action " + std::to_string(a) +
                         " is singular; use a positive ridge");
    rhs_reward[a] = phi_a[a].transpose() * design.rewards(by_action[a]);
  }

  auto fqi_step = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& out, std::vector<int>& policy) {
    Eigen::Map<const Eigen::MatrixXd> blocks(beta.data(), M, m);
    Eigen::MatrixXd qn = design.phi_next * blocks;
    Eigen::VectorXd vmax;
    row_max(qn, vmax, policy);
    out.resize(L);
    for (int a = 0; a < m; ++a) {
      Eigen::VectorXd rhs = rhs_reward[a];
      if (gamma != 0.0 && !by_action[a].empty())
        rhs.noalias() += gamma * (phi_a[a].transpose() * vmax(by_action[a]));
      out.segment(static_cast<Eigen::Index>(a) * M, M) = chol[a].solve(rhs);
    }
  };

  // Exact fixed point of the ridge-regularized iteration for a frozen
  // next-state policy.
  auto solve_for_policy = [&](std::span<const int> policy, Eigen::VectorXd& out) {
    Eigen::MatrixXd a_mat = -gamma * cross_design(design, by_action, policy);
    Eigen::VectorXd rhs(L);
    for (int a = 0; a < m; ++a) {
      a_mat.block(static_cast<Eigen::Index>(a) * M, static_cast<Eigen::Index>(a) * M, M, M) +=
          gram[a];
      rhs.segment(static_cast<Eigen::Index>(a) * M, M) = rhs_reward[a];
    }
    a_mat.diagonal().array() += ridge;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a_mat);
    out = lu.solve(rhs);
    return out.allFinite();
  };

  QCoefficients q;
  q.num_actions = m;
  q.beta = Eigen::VectorXd::Zero(L);
  const int k_max = cfg.resolved_k_max(static_cast<std::size_t>(n));
  if (trace) trace->iterates.push_back(q.beta);

  q.ridge = ridge;
  Eigen::VectorXd next;
  std::vector<int> policy, prev_policy, failed_policy;
  double first_delta = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    fqi_step(q.beta, next, policy);  // policy = greedy under the current beta
    q.last_delta = (next - q.beta).norm();
    if (k == 1) first_delta = q.last_delta;
    if (!std::isfinite(q.last_delta) || q.last_delta > 1e6 * (1.0 + first_delta)) {
      q.beta = next;
      q.iterations = k;
      q.diagnostic = "FQI diverged after " + std::to_string(k) + " iterations";
      diverged = true;
      return q;
    }
    q.beta = next;
    q.iterations = k;
    if (trace) trace->iterates.push_back(q.beta);
    if (q.last_delta < cfg.tol) {
      q.converged = true;
      break;
    }
    if (cfg.accelerate && k >= 2 && policy == prev_policy && policy != failed_policy) {
      // policy was stable over the last update; try its fixed point
      Eigen::VectorXd candidate;
      if (solve_for_policy(policy, candidate)) {
        Eigen::VectorXd check;
        std::vector<int> candidate_policy;
        fqi_step(candidate, check, candidate_policy);
        const double d = (check - candidate).norm();
        if (candidate_policy == policy && d < cfg.tol) {
          q.beta = candidate;
          q.last_delta = d;
          q.converged = true;
          if (trace) trace->iterates.push_back(q.beta);
          break;
        }
      }
      failed_policy = policy;
    }
    prev_policy = std::move(policy);
  }
  if (!q.converged)
    q.diagnostic = "FQI did not converge in " + std::to_string(k_max) +
                   " iterations (last step " + std::to_string(q.last_delta) + ")";
  return q;
}

}  // namespace

QCoefficients fit_linear_fqi(const LinearDesign& design, const FqiConfig& cfg, FqiTrace* trace) {
  cfg.validate();
  double scale = 1.0;
  bool diverged = false;
  QCoefficients q = fit_once(design, cfg, scale, trace, diverged);
  for (int k = 0; k < cfg.ridge_escalations && diverged; ++k) {
    scale *= 10.0;
    if (trace) trace->iterates.clear();
    q = fit_once(design, cfg, scale, trace, diverged);
    q.escalations = k + 1;
  }
  return q;
}

QCoefficients fit_linear_fqi(const TransitionBatch& batch, const FeatureMap& map,
                             const FqiConfig& cfg) {
  auto q = fit_linear_fqi(LinearDesign::from_batch(batch, map), cfg);
  q.t1 = batch.t1;
  q.t2 = batch.t2;
  q.spec_id = map.id();
  return q;
}

Eigen::MatrixXd q_values(const QCoefficients& q, const Eigen::MatrixXd& phi) {
  if (phi.cols() != q.num_features()) throw std::invalid_argument("q_values: feature length mismatch");
  return phi * q.blocks();
}

std::vector<int> greedy_actions(const Eigen::MatrixXd& qvals) {
  Eigen::VectorXd vmax;
  std::vector<int> arg;
  row_max(qvals, vmax, arg);
  return arg;
}

double q_value(const QCoefficients& q, const FeatureMap& map, int a, std::span<const double> s) {
  return phi_L(map, q.num_actions, a, s).dot(q.beta);
}

int greedy_action(const QCoefficients& q, const FeatureMap& map, std::span<const double> s) {
  Eigen::RowVectorXd phi = map.evaluate_one(s).transpose();
  Eigen::MatrixXd qv = phi * q.blocks();
  return greedy_actions(qv).front();
}

Eigen::VectorXd td_errors(const QCoefficients& q, const LinearDesign& design, double discount) {
  Eigen::MatrixXd qs = q_values(q, design.phi);
  Eigen::MatrixXd qn = q_values(q, design.phi_next);
  Eigen::VectorXd delta(design.rows());
  for (Eigen::Index r = 0; r < design.rows(); ++r)
    delta(r) = design.rewards(r) + discount * qn.row(r).maxCoeff() - qs(r, design.actions[r]);
  return delta;
}

Eigen::VectorXd td_errors(const QCoefficients& q, const FeatureMap& map,
                          const TransitionBatch& batch, const FqiConfig& cfg) {
  return td_errors(q, LinearDesign::from_batch(batch, map), cfg.discount);
}

Eigen::VectorXd estimating_equation_residual(const QCoefficients& q, const LinearDesign& design,
                                             double discount) {
  const Eigen::VectorXd delta = td_errors(q, design, discount);
  const int M = design.num_features();
  Eigen::VectorXd res = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design.num_actions) * M);
  for (Eigen::Index r = 0; r < design.rows(); ++r)
    res.segment(static_cast<Eigen::Index>(design.actions[r]) * M, M) +=
        design.phi.row(r).transpose() * delta(r);
  return res;
}

Eigen::VectorXd estimating_equation_residual(const QCoefficients& q, const FeatureMap& map,
                                             const TransitionBatch& batch, const FqiConfig& cfg) {
  return estimating_equation_residual(q, LinearDesign::from_batch(batch, map), cfg.discount);
}

std::vector<std::vector<int>> trajectory_folds(int num_trajectories, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  if (num_trajectories < folds)
    throw std::invalid_argument("cross-validation: fewer trajectories (" +
                                std::to_string(num_trajectories) + ") than folds (" +
                                std::to_string(folds) + ")");
  std::vector<int> ids(num_trajectories);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  for (int k = num_trajectories - 1; k > 0; --k) {
    std::uniform_int_distribution<int> pick(0, k);
    std::swap(ids[k], ids[pick(rng)]);
  }
  std::vector<std::vector<int>> out(folds);
  for (int k = 0; k < num_trajectories; ++k) out[k % folds].push_back(ids[k]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

BasisCvResult cross_validate_basis(const Dataset& ds, int t1, int t2,
                                   std::span<const int> candidate_features, int folds,
                                   const FqiConfig& cfg, double gamma, std::uint64_t basis_seed,
                                   std::uint64_t fold_seed) {
  if (candidate_features.empty()) throw std::invalid_argument("cross_validate_basis: no candidates");
  BasisCvResult result;
  result.candidates.assign(candidate_features.begin(), candidate_features.end());
  if (candidate_features.size() == 1) {
    result.selected = candidate_features[0];
    result.criterion.assign(1, 0.0);
    return result;
  }
  const auto assignment = trajectory_folds(ds.num_trajectories(), folds, fold_seed);
  const TransitionBatch batch = slice_interval(ds, t1, t2);
  std::vector<int> fold_of(ds.num_trajectories());
  for (int f = 0; f < folds; ++f)
    for (int i : assignment[f]) fold_of[i] = f;

  std::vector<std::vector<Eigen::Index>> held(folds), kept(folds);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const int f = fold_of[batch.traj[r]];
    for (int g = 0; g < folds; ++g) (g == f ? held[g] : kept[g]).push_back(static_cast<Eigen::Index>(r));
  }

  double best = std::numeric_limits<double>::infinity();
  for (int M : candidate_features) {
    const BasisSpec spec = sample_basis(ds.num_actions(), M, ds.state_dim(), gamma, basis_seed);
    const LinearDesign full = LinearDesign::from_batch(batch, spec);
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      const QCoefficients q = fit_linear_fqi(select_rows(full, kept[f]), cfg);
      total += td_errors(q, select_rows(full, held[f]), cfg.discount).squaredNorm();
    }
    result.criterion.push_back(total);
    if (total < best) {  // strict: ties keep the earlier (smaller, if sorted) candidate
      best = total;
      result.selected = M;
    }
  }
  return result;
}

int cross_validate_basis(const Dataset& ds, int t1, int t2, std::span<const int> candidate_features,
                         int folds, const FqiConfig& cfg, std::uint64_t seed) {
  const double gamma = median_heuristic_gamma(states_time_major(ds, t1, t2),
                                              derive_seed(seed, {stream::kMedian}));
  std::vector<int> sorted(candidate_features.begin(), candidate_features.end());
  std::sort(sorted.begin(), sorted.end());
  return cross_validate_basis(ds, t1, t2, sorted, folds, cfg, gamma,
                              derive_seed(seed, {stream::kBasis}),
                              derive_seed(seed, {stream::kFolds}))
      .selected;
}

}  // namespace cusumrl
