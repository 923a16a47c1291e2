#include "cusumrl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cusumrl/parallel.hpp"
#include "cusumrl/random.hpp"

namespace cusumrl {

Eigen::VectorXd bootstrap_multipliers(std::uint64_t seed, int b, Eigen::Index rows) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(b)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd e(rows);
  for (Eigen::Index r = 0; r < rows; ++r) e(r) = normal(rng);
  return e;
}

Eigen::VectorXd bootstrap_q_draw(const LinearDesign& segment, const Eigen::VectorXd& delta,
                                 const Eigen::MatrixXd& w_inv, std::span<const double> e) {
  if (static_cast<Eigen::Index>(e.size()) != segment.rows() || delta.size() != segment.rows())
    throw std::invalid_argument("bootstrap_q_draw: one multiplier and TD error per row required");
  const int M = segment.num_features();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(segment.basis_length());
  for (Eigen::Index r = 0; r < segment.rows(); ++r)
    g.segment(static_cast<Eigen::Index>(segment.actions[r]) * M, M) +=
        segment.phi.row(r).transpose() * (delta(r) * e[r]);
  return w_inv * g / static_cast<double>(segment.rows());
}

namespace {

struct ActionRows {
  std::vector<Eigen::Index> rows;  // ascending window rows with this action
  Eigen::MatrixXd phi;             // phi of those rows
};

// Per-u quantities reused across chunks of draws.
struct SplitCache {
  Eigen::Index n_left = 0;
  std::vector<Eigen::Index> k_left;  // per action: rows of that action in the left block
  double weight = 0.0;
  Eigen::MatrixXd inv_sd;  // rows x m, only for the normalized statistic
  std::vector<Eigen::MatrixXd> x_left, x_right;  // per action: phi * delta
};

}  // namespace

BootstrapDraws bootstrap_statistics(const WindowDesign& window, std::span<const SegmentFit> fits,
                                    const BootstrapConfig& cfg, std::span<const StatKind> kinds,
                                    int workers) {
  if (cfg.B < 1) throw std::invalid_argument("bootstrap: B must be at least 1");
  if (fits.empty()) throw std::invalid_argument("bootstrap: empty candidate grid");
  bool want[kNumStatKinds] = {false, false, false};
  for (auto k : kinds) want[static_cast<int>(k)] = true;
  const bool need_all_actions = want[1] || want[2];

  const auto& d = window.design;
  const int m = d.num_actions;
  const int M = d.num_features();
  const Eigen::Index n = d.rows();
  const double norm_integral = static_cast<double>(window.num_trajectories) * window.T;

  std::vector<ActionRows> by_action(m);
  for (Eigen::Index r = 0; r < n; ++r) by_action[d.actions[r]].rows.push_back(r);
  for (auto& ar : by_action) ar.phi = d.phi(ar.rows, Eigen::all);
  const StateMatrix phi_rm = d.phi;

  std::vector<SplitCache> cache(fits.size());
  parallel_for(static_cast<int>(fits.size()), workers, [&](int j) {
    const auto& f = fits[j];
    auto& c = cache[j];
    c.n_left = window.rows_before(f.u);
    c.weight = cusum_weight(f.u, window.t0, window.T);
    c.k_left.resize(m);
    c.x_left.resize(m);
    c.x_right.resize(m);
    for (int a = 0; a < m; ++a) {
      const auto& rows = by_action[a].rows;
      const auto k = std::lower_bound(rows.begin(), rows.end(), c.n_left) - rows.begin();
      c.k_left[a] = k;
      const Eigen::Index nr = static_cast<Eigen::Index>(rows.size()) - k;
      Eigen::VectorXd dl(k), dr(nr);
      for (Eigen::Index p = 0; p < k; ++p) dl(p) = f.delta_left(rows[p]);
      for (Eigen::Index p = 0; p < nr; ++p) dr(p) = f.delta_right(rows[k + p] - c.n_left);
      c.x_left[a] = by_action[a].phi.topRows(k).array().colwise() * dl.array();
      c.x_right[a] = by_action[a].phi.bottomRows(nr).array().colwise() * dr.array();
    }
    if (want[2]) {
      const Eigen::MatrixXd cov = f.cov_left + f.cov_right;
      c.inv_sd.resize(n, m);
      for (int a = 0; a < m; ++a) {
        const auto blk = cov.block(static_cast<Eigen::Index>(a) * M,
                                   static_cast<Eigen::Index>(a) * M, M, M);
        const Eigen::VectorXd var = ((d.phi * blk).array() * d.phi.array()).rowwise().sum();
        for (Eigen::Index r = 0; r < n; ++r)
          c.inv_sd(r, a) = 1.0 / std::max(std::sqrt(std::max(var(r), 0.0)), kSigmaFloor);
      }
    }
  });

  BootstrapDraws out;
  for (int k = 0; k < kNumStatKinds; ++k)
    if (want[k]) out.draws[k].assign(static_cast<std::size_t>(cfg.B), 0.0);

  const int chunk = std::max(1, cfg.chunk);
  const int num_chunks = (cfg.B + chunk - 1) / chunk;
  parallel_for(num_chunks, workers, [&](int ci) {
    const int b0 = ci * chunk;
    const int nb = std::min(chunk, cfg.B - b0);
    std::vector<Eigen::MatrixXd> e_a(m);
    for (int a = 0; a < m; ++a) e_a[a].resize(static_cast<Eigen::Index>(by_action[a].rows.size()), nb);
    for (int j = 0; j < nb; ++j) {
      const Eigen::VectorXd e = bootstrap_multipliers(cfg.seed, b0 + j, n);
      for (int a = 0; a < m; ++a) e_a[a].col(j) = e(by_action[a].rows);
    }
    Eigen::MatrixXd g_left(static_cast<Eigen::Index>(m) * M, nb);
    Eigen::MatrixXd g_right(static_cast<Eigen::Index>(m) * M, nb);
    // per-action coefficient panels, row j of action a contiguous over draws
    std::vector<double> panel(static_cast<std::size_t>(m) * M * nb);
    std::vector<double> q(nb), acc_int(nb), acc_max(nb), acc_norm(nb);
    for (std::size_t j = 0; j < fits.size(); ++j) {
      const auto& f = fits[j];
      const auto& c = cache[j];
      for (int a = 0; a < m; ++a) {
        const Eigen::Index k = c.k_left[a];
        const Eigen::Index nr = e_a[a].rows() - k;
        g_left.middleRows(static_cast<Eigen::Index>(a) * M, M).noalias() =
            c.x_left[a].transpose() * e_a[a].topRows(k);
        g_right.middleRows(static_cast<Eigen::Index>(a) * M, M).noalias() =
            c.x_right[a].transpose() * e_a[a].bottomRows(nr);
      }
      const double nl = static_cast<double>(c.n_left);
      const double nrr = static_cast<double>(n - c.n_left);
      const Eigen::MatrixXd dc = f.w_left_inv * g_left / nl - f.w_right_inv * g_right / nrr;
      for (Eigen::Index row = 0; row < dc.rows(); ++row)
        for (int jb = 0; jb < nb; ++jb) panel[static_cast<std::size_t>(row) * nb + jb] = dc(row, jb);
      std::fill(acc_int.begin(), acc_int.end(), 0.0);
      std::fill(acc_max.begin(), acc_max.end(), 0.0);
      std::fill(acc_norm.begin(), acc_norm.end(), 0.0);
      for (Eigen::Index r = 0; r < n; ++r) {
        const double* pr = phi_rm.data() + r * M;
        const int ar = d.actions[r];
        for (int a = 0; a < m; ++a) {
          if (!need_all_actions && a != ar) continue;
          const double* pa = panel.data() + static_cast<std::size_t>(a) * M * nb;
          double* qv = q.data();
          const double x0 = pr[0];
          for (int jb = 0; jb < nb; ++jb) qv[jb] = x0 * pa[jb];
          for (int col = 1; col < M; ++col) {
            const double x = pr[col];
            const double* pj = pa + static_cast<std::size_t>(col) * nb;
            for (int jb = 0; jb < nb; ++jb) qv[jb] += x * pj[jb];
          }
          if (want[0] && a == ar)
            for (int jb = 0; jb < nb; ++jb) acc_int[jb] += std::abs(qv[jb]);
          if (want[1])
            for (int jb = 0; jb < nb; ++jb) {
              const double v = std::abs(qv[jb]);
              acc_max[jb] = acc_max[jb] < v ? v : acc_max[jb];
            }
          if (want[2]) {
            const double s = c.inv_sd(r, a);
            for (int jb = 0; jb < nb; ++jb) {
              const double v = std::abs(qv[jb]) * s;
              acc_norm[jb] = acc_norm[jb] < v ? v : acc_norm[jb];
            }
          }
        }
      }
      for (int jb = 0; jb < nb; ++jb) {
        const auto b = static_cast<std::size_t>(b0 + jb);
        if (want[0])
          out.draws[0][b] = std::max(out.draws[0][b], c.weight * acc_int[jb] / norm_integral);
        if (want[1]) out.draws[1][b] = std::max(out.draws[1][b], c.weight * acc_max[jb]);
        if (want[2]) out.draws[2][b] = std::max(out.draws[2][b], c.weight * acc_norm[jb]);
      }
    }
  });
  return out;
}

double p_value(double ts, std::span<const double> draws) {
  if (draws.empty()) throw std::invalid_argument("p_value: no bootstrap draws");
  std::size_t count = 0;
  for (double v : draws)
    if (v >= ts) ++count;
  return static_cast<double>(1 + count) / static_cast<double>(draws.size() + 1);
}

double aggregate_pvalues(std::span<const double> p, double tau) {
  if (p.empty()) throw std::invalid_argument("aggregate_pvalues: empty vector");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("aggregate_pvalues: tau in (0, 1)");
  std::vector<double> scaled;
  for (double v : p) scaled.push_back(v / tau);
  std::sort(scaled.begin(), scaled.end());
  const auto r = static_cast<double>(p.size());
  auto rank = static_cast<std::size_t>(std::ceil(tau * r - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, p.size());
  return std::min(1.0, scaled[rank - 1]);
}

void TestConfig::validate() const {
  fqi.validate();
  if (!(scan.epsilon > 0.0 && scan.epsilon < 0.5))
    throw std::invalid_argument("epsilon-boundary must lie in (0, 0.5)");
  if (bootstrap_b < 1) throw std::invalid_argument("bootstrap-b must be at least 1");
  if (repetitions < 1) throw std::invalid_argument("reps must be at least 1");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  if (cross_validate) {
    if (cv_candidates.empty()) throw std::invalid_argument("cv candidates must be nonempty");
    for (int c : cv_candidates)
      if (c < 1) throw std::invalid_argument("cv candidates must be positive");
    if (cv_folds < 2) throw std::invalid_argument("cv folds must be at least 2");
  } else if (num_features < 1) {
    throw std::invalid_argument("num-features must be positive");
  }
  if (kinds.empty()) throw std::invalid_argument("at least one statistic required");
}

nlohmann::json TestResult::to_json(bool include_draws) const {
  nlohmann::json j;
  j["stat"] = to_string(kind);
  j["statistic"] = statistic;
  j["B"] = draws.size();
  j["p_value"] = p_value;
  j["seed"] = seed;
  j["interval"] = {t0, T};
  j["u_grid"] = u_grid;
  j["num_features"] = num_features;
  j["gamma"] = gamma;
  j["converged"] = converged;
  if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
  if (!draws.empty()) {
    std::vector<double> sorted = draws;
    std::sort(sorted.begin(), sorted.end());
    nlohmann::json q;
    for (double level : {0.5, 0.9, 0.95, 0.99}) {
      const auto idx = static_cast<std::size_t>(std::ceil(level * sorted.size())) - 1;
      q[std::to_string(static_cast<int>(std::lround(level * 100)))] =
          sorted[std::min(idx, sorted.size() - 1)];
    }
    j["draw_quantiles"] = q;
  }
  if (include_draws) j["draws"] = draws;
  return j;
}

Dataset center_rewards(const Dataset& ds, int t0, int T) {
  double sum = 0.0;
  for (int i = 0; i < ds.num_trajectories(); ++i)
    for (int t = t0; t < T; ++t) sum += ds.reward(i, t);
  const double mean = sum / (static_cast<double>(ds.num_trajectories()) * (T - t0));
  std::vector<double> r = ds.rewards();
  for (double& x : r) x -= mean;
  return ds.with_rewards(std::move(r));
}

std::vector<TestResult> run_single_test(const Dataset& raw, int t0, int T, const TestConfig& cfg,
                                        std::uint64_t seed, ScanResult* scan_out) {
  cfg.validate();
  if (t0 < raw.t0() || T > raw.horizon() || t0 >= T)
    throw std::out_of_range("test window [" + std::to_string(t0) + ", " + std::to_string(T) +
                            "] outside the data");
  const std::vector<int> grid = candidate_grid(t0, T, cfg.scan);
  if (grid.empty())
    throw std::invalid_argument("no candidate change points in [" + std::to_string(t0) + ", " +
                                std::to_string(T) + "] after boundary removal");
  Dataset ds = cfg.standardize ? fit_scaler(raw, t0, T).apply(raw) : raw;
  if (cfg.center_rewards) ds = center_rewards(ds, t0, T);
  const double gamma =
      median_heuristic_gamma(states_time_major(ds, t0, T), derive_seed(seed, {stream::kMedian}));
  const std::uint64_t basis_seed = derive_seed(seed, {stream::kBasis});
  int M = cfg.num_features;
  if (cfg.cross_validate) {
    std::vector<int> cands = cfg.cv_candidates;
    std::sort(cands.begin(), cands.end());
    M = cross_validate_basis(ds, t0, T, cands, cfg.cv_folds, cfg.fqi, gamma, basis_seed,
                             derive_seed(seed, {stream::kFolds}))
            .selected;
  }
  const BasisSpec basis = sample_basis(ds.num_actions(), M, ds.state_dim(), gamma, basis_seed);
  const WindowDesign window = make_window(ds, t0, T, basis);
  const auto fits = fit_segments(window, grid, cfg.fqi, cfg.workers);
  const ScanResult scan = scan_statistics(window, fits);
  BootstrapConfig bcfg;
  bcfg.B = cfg.bootstrap_b;
  bcfg.seed = derive_seed(seed, {stream::kBootstrap});
  const BootstrapDraws draws = bootstrap_statistics(window, fits, bcfg, cfg.kinds, cfg.workers);

  bool converged = true;
  std::string diagnostic;
  for (const auto& f : fits) {
    if (f.converged()) continue;
    converged = false;
    if (diagnostic.empty())
      diagnostic = "u=" + std::to_string(f.u) + ": " +
                   (f.left.converged ? f.right.diagnostic : f.left.diagnostic);
  }
  std::vector<TestResult> out;
  for (StatKind kind : cfg.kinds) {
    TestResult r;
    r.kind = kind;
    r.statistic = scan[kind];
    r.draws = draws[kind];
    r.p_value = p_value(r.statistic, r.draws);
    r.seed = seed;
    r.t0 = t0;
    r.T = T;
    r.u_grid = grid;
    r.num_features = M;
    r.gamma = gamma;
    r.converged = converged;
    r.diagnostic = diagnostic;
    out.push_back(std::move(r));
  }
  if (scan_out) *scan_out = scan;
  return out;
}

double AggregatedTest::p_value(StatKind kind) const {
  for (std::size_t k = 0; k < kinds.size(); ++k)
    if (kinds[k] == kind) return p_values[k];
  throw std::invalid_argument("statistic " + to_string(kind) + " was not computed");
}

bool AggregatedTest::converged() const {
  for (const auto& rep : repetitions)
    for (const auto& r : rep)
      if (!r.converged) return false;
  return true;
}

nlohmann::json AggregatedTest::to_json(bool include_draws) const {
  nlohmann::json j;
  j["interval"] = {t0, T};
  j["tau"] = tau;
  j["seed"] = seed;
  j["converged"] = converged();
  nlohmann::json stats = nlohmann::json::array();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    nlohmann::json s;
    s["stat"] = to_string(kinds[k]);
    s["p_value"] = p_values[k];
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : repetitions) reps.push_back(rep[k].to_json(include_draws));
    s["repetitions"] = reps;
    stats.push_back(s);
  }
  j["tests"] = stats;
  return j;
}

AggregatedTest run_test(const Dataset& ds, int t0, int T, const TestConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  AggregatedTest out;
  out.t0 = t0;
  out.T = T;
  out.tau = cfg.tau;
  out.seed = seed;
  out.kinds = cfg.kinds;
  for (int r = 0; r < cfg.repetitions; ++r)
    out.repetitions.push_back(run_single_test(
        ds, t0, T, cfg, derive_seed(seed, {stream::kRepetition, static_cast<std::uint64_t>(r)})));
  for (std::size_t k = 0; k < cfg.kinds.size(); ++k) {
    std::vector<double> p;
    for (const auto& rep : out.repetitions) p.push_back(rep[k].p_value);
    out.p_values.push_back(aggregate_pvalues(p, cfg.tau));
  }
  return out;
}

}  // namespace cusumrl
