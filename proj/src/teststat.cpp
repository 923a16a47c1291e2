#include "cusumrl/teststat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "cusumrl/parallel.hpp"

namespace cusumrl {

std::string to_string(StatKind kind) {
  switch (kind) {
    case StatKind::Integral: return "integral";
    case StatKind::Max: return "max";
    case StatKind::NormalizedMax: return "norm";
  }
  return "integral";
}

StatKind parse_stat_kind(const std::string& name) {
  if (name == "integral") return StatKind::Integral;
  if (name == "max") return StatKind::Max;
  if (name == "norm") return StatKind::NormalizedMax;
  throw std::invalid_argument("unknown statistic '" + name + "' (expected integral, max or norm)");
}

std::vector<int> candidate_grid(int t0, int T, const ScanConfig& cfg) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5))
    throw std::invalid_argument("scan: epsilon must lie in (0, 0.5)");
  if (t0 >= T) throw std::out_of_range("scan: empty window");
  if (!cfg.u_grid.empty()) {
    for (std::size_t k = 0; k < cfg.u_grid.size(); ++k) {
      const int u = cfg.u_grid[k];
      if (u <= t0 || u >= T) throw std::out_of_range("scan: candidate outside the window");
      if (k > 0 && u <= cfg.u_grid[k - 1])
        throw std::invalid_argument("scan: candidates must be increasing");
    }
    return cfg.u_grid;
  }
  const double scale = cfg.boundary_scale > 0 ? cfg.boundary_scale : T;
  const double b = cfg.epsilon * scale;
  int stride = cfg.stride;
  if (stride <= 0) stride = T <= 100 ? 1 : (T + 99) / 100;
  const double lo = t0 + b;
  const double hi = T - b;
  std::vector<int> grid;
  int u = static_cast<int>(std::floor(lo)) + 1;
  for (; u < hi; u += stride)
    if (u > lo && u > t0 && u < T) grid.push_back(u);
  return grid;
}

double cusum_weight(int u, int t0, int T) {
  if (!(t0 < u && u < T)) throw std::out_of_range("cusum_weight: need t0 < u < T");
  const double len = T - t0;
  return std::sqrt(static_cast<double>(u - t0) * static_cast<double>(T - u)) / len;
}

WindowDesign make_window(const Dataset& ds, int t0, int T, const FeatureMap& map) {
  if (t0 < ds.t0() || T > ds.horizon() || t0 >= T)
    throw std::out_of_range("window [" + std::to_string(t0) + ", " + std::to_string(T) +
                            "] outside the data");
  const int N = ds.num_trajectories();
  const StateMatrix states = states_time_major(ds, t0, T);
  const Eigen::MatrixXd phi = map.evaluate(states);
  const Eigen::Index rows = static_cast<Eigen::Index>(T - t0) * N;
  WindowDesign w;
  w.t0 = t0;
  w.T = T;
  w.num_trajectories = N;
  w.design.num_actions = ds.num_actions();
  w.design.phi = phi.topRows(rows);
  w.design.phi_next = phi.bottomRows(rows);
  w.design.actions.resize(static_cast<std::size_t>(rows));
  w.design.rewards.resize(rows);
  for (int t = t0; t < T; ++t)
    for (int i = 0; i < N; ++i) {
      const auto r = static_cast<Eigen::Index>(t - t0) * N + i;
      w.design.actions[r] = ds.action(i, t);
      w.design.rewards(r) = ds.reward(i, t);
    }
  return w;
}

Eigen::MatrixXd w_hat(const LinearDesign& segment, const QCoefficients& q, double discount) {
  if (segment.rows() == 0) throw std::invalid_argument("w_hat: empty segment");
  const auto policy = greedy_actions(q_values(q, segment.phi_next));
  return bellman_design_matrix(segment, policy, discount) / static_cast<double>(segment.rows());
}

Eigen::MatrixXd invert_w(const Eigen::MatrixXd& w) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(w);
  if (lu.rcond() > 1e-13) return lu.inverse();
  const double ridge = 1e-8 * std::max(w.diagonal().cwiseAbs().mean(), 1e-300);
  Eigen::MatrixXd wr = w;
  wr.diagonal().array() += ridge;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu2(wr);
  if (!(lu2.rcond() > 1e-15) || !std::isfinite(lu2.rcond()))
    throw NumericError("W-hat is singular even after a ridge adjustment");
  return lu2.inverse();
}

Eigen::MatrixXd segment_covariance(const LinearDesign& segment, const Eigen::VectorXd& delta,
                                   const Eigen::MatrixXd& w_inv) {
  const int M = segment.num_features();
  const int L = segment.basis_length();
  // sum phi_L phi_L' delta^2 is block diagonal by action
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(L, L);
  std::vector<std::vector<Eigen::Index>> by_action(segment.num_actions);
  for (Eigen::Index r = 0; r < segment.rows(); ++r) by_action[segment.actions[r]].push_back(r);
  for (int a = 0; a < segment.num_actions; ++a) {
    if (by_action[a].empty()) continue;
    const Eigen::MatrixXd x =
        segment.phi(by_action[a], Eigen::all).array().colwise() * delta(by_action[a]).array();
    omega.block(static_cast<Eigen::Index>(a) * M, static_cast<Eigen::Index>(a) * M, M, M) =
        x.transpose() * x;
  }
  const double n = static_cast<double>(segment.rows());
  return w_inv * omega * w_inv.transpose() / (n * n);
}

namespace {

// W-hat of the ridge-regularized estimating equation.
Eigen::MatrixXd with_ridge(Eigen::MatrixXd w, double ridge, Eigen::Index rows) {
  w.diagonal().array() += ridge / static_cast<double>(rows);
  return w;
}

}  // namespace

SegmentFit fit_segment(const WindowDesign& window, int u, const FqiConfig& cfg) {
  if (!(window.t0 < u && u < window.T)) throw std::out_of_range("fit_segment: u outside window");
  SegmentFit f;
  f.u = u;
  const LinearDesign left = window.left(u);
  const LinearDesign right = window.right(u);
  f.left = fit_linear_fqi(left, cfg);
  f.left.t1 = window.t0;
  f.left.t2 = u;
  f.right = fit_linear_fqi(right, cfg);
  f.right.t1 = u;
  f.right.t2 = window.T;
  f.w_left = w_hat(left, f.left, cfg.discount);
  f.w_right = w_hat(right, f.right, cfg.discount);
  f.w_left_inv = invert_w(with_ridge(f.w_left, f.left.ridge, left.rows()));
  f.w_right_inv = invert_w(with_ridge(f.w_right, f.right.ridge, right.rows()));
  f.delta_left = td_errors(f.left, left, cfg.discount);
  f.delta_right = td_errors(f.right, right, cfg.discount);
  f.cov_left = segment_covariance(left, f.delta_left, f.w_left_inv);
  f.cov_right = segment_covariance(right, f.delta_right, f.w_right_inv);
  return f;
}

std::vector<SegmentFit> fit_segments(const WindowDesign& window, std::span<const int> u_grid,
                                     const FqiConfig& cfg, int workers) {
  std::vector<SegmentFit> fits(u_grid.size());
  parallel_for(static_cast<int>(u_grid.size()), workers,
               [&](int k) { fits[k] = fit_segment(window, u_grid[k], cfg); });
  return fits;
}

double sigma_hat(const SegmentFit& fit, const FeatureMap& map, int a, std::span<const double> s) {
  const Eigen::VectorXd p = phi_L(map, fit.left.num_actions, a, s);
  const double v = p.dot((fit.cov_left + fit.cov_right) * p);
  return std::sqrt(std::max(v, 0.0));
}

ScanResult scan_statistics(const WindowDesign& window, std::span<const SegmentFit> fits) {
  if (fits.empty()) throw std::invalid_argument("scan: empty candidate grid");
  const auto& d = window.design;
  const int m = d.num_actions;
  const int M = d.num_features();
  const double norm_integral = static_cast<double>(window.num_trajectories) * window.T;
  ScanResult out;
  for (int k = 0; k < kNumStatKinds; ++k) out.statistic[k] = 0.0;
  for (const auto& f : fits) {
    ScanPoint p;
    p.u = f.u;
    p.weight = cusum_weight(f.u, window.t0, window.T);
    const Eigen::MatrixXd dq = q_values(f.left, d.phi) - q_values(f.right, d.phi);
    double sum = 0.0;
    for (Eigen::Index r = 0; r < d.rows(); ++r) sum += std::abs(dq(r, d.actions[r]));
    p.value[0] = p.weight * sum / norm_integral;
    p.value[1] = p.weight * dq.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd cov = f.cov_left + f.cov_right;
    double best = 0.0;
    for (int a = 0; a < m; ++a) {
      const auto blk = cov.block(static_cast<Eigen::Index>(a) * M, static_cast<Eigen::Index>(a) * M,
                                 M, M);
      const Eigen::VectorXd var = ((d.phi * blk).array() * d.phi.array()).rowwise().sum();
      for (Eigen::Index r = 0; r < d.rows(); ++r) {
        const double sd = std::max(std::sqrt(std::max(var(r), 0.0)), kSigmaFloor);
        best = std::max(best, std::abs(dq(r, a)) / sd);
      }
    }
    p.value[2] = p.weight * best;
    for (int k = 0; k < kNumStatKinds; ++k) out.statistic[k] = std::max(out.statistic[k], p.value[k]);
    out.points.push_back(p);
  }
  return out;
}

double ts_integral(const WindowDesign& window, std::span<const SegmentFit> fits) {
  return scan_statistics(window, fits)[StatKind::Integral];
}

double ts_max(const WindowDesign& window, std::span<const SegmentFit> fits) {
  return scan_statistics(window, fits)[StatKind::Max];
}

double ts_norm(const WindowDesign& window, std::span<const SegmentFit> fits) {
  return scan_statistics(window, fits)[StatKind::NormalizedMax];
}

void write_scan_csv(const std::filesystem::path& path, const ScanResult& scan) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.precision(17);
  f << "u,weight,integral,max,norm\n";
  for (const auto& p : scan.points)
    f << p.u << ',' << p.weight << ',' << p.value[0] << ',' << p.value[1] << ',' << p.value[2]
      << '\n';
}

}  // namespace cusumrl
