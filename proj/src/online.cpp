#include "cusumrl/online.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "cusumrl/random.hpp"

namespace cusumrl {

std::string MethodSpec::label() const {
  switch (method) {
    case OnlineMethod::Proposed: return "proposed";
    case OnlineMethod::Overall: return "overall";
    case OnlineMethod::Random: return "random";
    case OnlineMethod::Oracle: return "oracle";
    case OnlineMethod::Kernel: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, bandwidth);
      return "kernel(" + std::string(buf, res.ptr) + ")";
    }
  }
  return "proposed";
}

MethodSpec MethodSpec::parse(const std::string& text) {
  if (text == "proposed") return {OnlineMethod::Proposed};
  if (text == "overall") return {OnlineMethod::Overall};
  if (text == "random") return {OnlineMethod::Random};
  if (text == "oracle") return {OnlineMethod::Oracle};
  if (text.rfind("kernel(", 0) == 0 && text.back() == ')') {
    const std::string inner = text.substr(7, text.size() - 8);
    double h = 0.0;
    auto res = std::from_chars(inner.data(), inner.data() + inner.size(), h);
    if (res.ec != std::errc() || res.ptr != inner.data() + inner.size() || h < 0.0)
      throw std::invalid_argument("bad kernel bandwidth in '" + text + "'");
    return {OnlineMethod::Kernel, h};
  }
  throw std::invalid_argument("unknown method '" + text +
                              "' (proposed, overall, random, oracle, kernel(h))");
}

double kernel_weight(int t, int T, double h, int batch_len) {
  if (h < 0.0) throw std::invalid_argument("kernel bandwidth must be nonnegative");
  if (h == 0.0) return t >= T - batch_len ? 1.0 : 0.0;
  const double x = static_cast<double>(T - t) / (static_cast<double>(T) * h);
  return std::exp(-x * x);
}

void OnlineConfig::validate(int offline_T) const {
  if (batch_len < 1) throw std::invalid_argument("batch length must be positive");
  if (n_batches < 0) throw std::invalid_argument("batch count must be nonnegative");
  if (batch_len * n_batches + offline_T != t_end)
    throw std::invalid_argument("t_end must equal T + batch_len * n_batches");
  if (!(explore_eps >= 0.0 && explore_eps < 1.0))
    throw std::invalid_argument("exploration rate must lie in [0, 1)");
  if (methods.empty()) throw std::invalid_argument("no online methods requested");
  if (tree_iterations < 1) throw std::invalid_argument("tree iterations must be positive");
  if (kappa_min < 1 || kappa_step < 1) throw std::invalid_argument("bad re-scan kappa grid");
  if (!(kernel_sample_factor > 0.0)) throw std::invalid_argument("kernel sample factor must be positive");
  fqi.validate();
}

int OnlineProblem::oracle_change_point(int t) const {
  int c = offline_change <= t ? offline_change : 0;
  for (int s : schedule)
    if (s <= t) c = std::max(c, s);
  return c;
}

OnlineProblem make_online_problem(const ScenarioSpec& offline, double change_rate, int t_end,
                                  std::uint64_t seed) {
  OnlineProblem p;
  p.offline = gen_scenario(offline, derive_seed(seed, {stream::kReplication}));
  p.env.kind = offline.kind;
  p.env.signal = offline.signal;
  p.env.noise_sd = offline.noise_sd;
  p.env.smooth_width = offline.smooth_width;
  p.env.smooth_scale = offline.T;
  p.schedule = poisson_schedule(change_rate, offline.T, t_end, derive_seed(seed, {stream::kSchedule}));
  p.offline_change = offline.t_star;
  p.noise_seed = derive_seed(seed, {stream::kEnvNoise});
  p.explore_seed = derive_seed(seed, {stream::kExplore});
  return p;
}

double ValueTrace::value() const {
  if (rewards.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : rewards)
    for (double v : r) total += v;
  return total / static_cast<double>(rewards.size());
}

double ValueTrace::discounted_value(double gamma) const {
  if (rewards.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : rewards) {
    double g = 1.0;
    for (double v : r) {
      total += g * v;
      g *= gamma;
    }
  }
  return (1.0 - gamma) * total / static_cast<double>(rewards.size());
}

ValueSummary evaluate_value(const ValueTrace& trace, double gamma) {
  return {trace.value(), trace.discounted_value(gamma)};
}

namespace {

using PolicyFn = std::function<int(std::span<const double>)>;

// Subject histories growing one batch at a time.
struct History {
  int N = 0;
  int dim = 0;
  int m = 2;
  int T = 0;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<double>> rewards;

  explicit History(const Dataset& ds)
      : N(ds.num_trajectories()), dim(ds.state_dim()), m(ds.num_actions()), T(ds.horizon()) {
    for (int i = 0; i < N; ++i) {
      std::vector<double> s;
      std::vector<int> a;
      std::vector<double> r;
      for (int t = 0; t <= T; ++t) {
        auto st = ds.state(i, t);
        s.insert(s.end(), st.begin(), st.end());
        if (t < T) {
          a.push_back(ds.action(i, t));
          r.push_back(ds.reward(i, t));
        }
      }
      states.push_back(std::move(s));
      actions.push_back(std::move(a));
      rewards.push_back(std::move(r));
    }
  }

  Dataset dataset() const {
    std::vector<double> s;
    std::vector<int> a;
    std::vector<double> r;
    for (int i = 0; i < N; ++i) {
      s.insert(s.end(), states[i].begin(), states[i].end());
      a.insert(a.end(), actions[i].begin(), actions[i].end());
      r.insert(r.end(), rewards[i].begin(), rewards[i].end());
    }
    return Dataset(N, T, dim, m, 0, std::move(s), std::move(a), std::move(r));
  }
};

struct Learner {
  const OnlineConfig& cfg;
  TreeParams params;
  bool tuned = false;

  PolicyFn fit(const Dataset& ds, int start, int end, std::span<const double> weights,
               std::uint64_t seed) {
    const TransitionBatch batch = slice_interval(ds, start, end);
    if (cfg.linear_policy) {
      const StateMatrix st = states_time_major(ds, start, end);
      double gamma = 1.0;
      try {
        gamma = median_heuristic_gamma(st, derive_seed(seed, {stream::kMedian}));
      } catch (const std::invalid_argument&) {
      }
      auto basis = std::make_shared<BasisSpec>(sample_basis(
          ds.num_actions(), cfg.linear_features, ds.state_dim(), gamma,
          derive_seed(seed, {stream::kBasis})));
      auto q = std::make_shared<QCoefficients>(fit_linear_fqi(batch, *basis, cfg.fqi));
      return [basis, q](std::span<const double> s) { return greedy_action(*q, *basis, s); };
    }
    if (!tuned || cfg.tree_cv_every_batch) {
      int distinct = 0;
      {
        std::vector<char> seen(static_cast<std::size_t>(ds.num_trajectories()), 0);
        for (int i : batch.traj)
          if (!seen[i]) {
            seen[i] = 1;
            ++distinct;
          }
      }
      if (distinct >= cfg.tree_folds && cfg.tree_folds >= 2) {
        params = cross_validate_tree(batch, cfg.tree_grid, cfg.tree_folds, cfg.fqi,
                                     cfg.tree_iterations, derive_seed(seed, {stream::kFolds}),
                                     weights);
      } else {
        params = TreeParams{cfg.tree_grid.depths.front(), cfg.tree_grid.min_leaf.front()};
      }
      tuned = true;
    }
    auto pol = std::make_shared<TreePolicy>(
        fit_tree_fqi(batch, params, cfg.fqi, cfg.tree_iterations, weights));
    return [pol](std::span<const double> s) { return pol->greedy_action(s); };
  }
};

int uniform_time(int lo, int hi, std::uint64_t seed) {
  Rng rng(seed);
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

std::vector<ValueTrace> run_online(const OnlineProblem& problem, const OnlineConfig& cfg,
                                   std::uint64_t seed) {
  const int T = problem.offline.horizon();
  cfg.validate(T);
  if (problem.offline.state_dim() != 1 || problem.offline.num_actions() != 2)
    throw std::invalid_argument("online harness expects 1-d states and binary actions");
  const int N = problem.offline.num_trajectories();

  // initial detection is shared by every method that needs it
  auto detect_initial = [&]() {
    if (cfg.detector) return cfg.detector(problem.offline, 0, 0);
    DetectConfig dc = cfg.detect;
    std::vector<int> kappas;
    for (int k : dc.kappas)
      if (k <= T) kappas.push_back(k);
    if (kappas.empty()) return 0;
    dc.kappas = kappas;
    return detect_change_point(problem.offline, 0, T, dc, derive_seed(seed, {stream::kKappa, 0}))
        .t_hat;
  };
  int proposed_initial = -1;

  std::vector<ValueTrace> out;
  for (const MethodSpec& method : cfg.methods) {
    ValueTrace trace;
    trace.method = method.label();
    trace.T = T;
    trace.rewards.assign(static_cast<std::size_t>(N), {});
    History hist(problem.offline);
    Learner learner{cfg, {}, false};
    std::vector<EnvState> envs(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
      envs[i].state = {problem.offline.state(i, T)[0]};
      envs[i].t = T;
      envs[i].schedule = problem.schedule;
      envs[i].noise_seed = derive_seed(problem.noise_seed, {static_cast<std::uint64_t>(i)});
    }

    int t_cur = T;
    int t_star = 0;
    switch (method.method) {
      case OnlineMethod::Proposed:
        if (proposed_initial < 0) proposed_initial = detect_initial();
        t_star = proposed_initial;
        break;
      case OnlineMethod::Overall: t_star = 0; break;
      case OnlineMethod::Random:
        t_star = uniform_time(0, T, derive_seed(seed, {stream::kBaseline, 0}));
        break;
      case OnlineMethod::Oracle: t_star = problem.oracle_change_point(T - 1); break;
      case OnlineMethod::Kernel: t_star = -1; break;
    }
    if (cfg.n_batches == 0) trace.t_star.push_back(t_star);

    for (int k = 0; k < cfg.n_batches; ++k) {
      const Dataset data = hist.dataset();
      const std::uint64_t batch_seed = derive_seed(seed, {stream::kRepetition, static_cast<std::uint64_t>(k)});
      if (k > 0) {
        switch (method.method) {
          case OnlineMethod::Proposed: {
            if (cfg.detector) {
              t_star = cfg.detector(data, t_star, k);
              break;
            }
            const int span = t_cur - t_star;
            if (span < cfg.kappa_min) break;
            DetectConfig dc = cfg.detect;
            dc.kappas = kappa_grid(cfg.kappa_min, span, cfg.kappa_step);
            if (dc.test.scan.boundary_scale == 0) dc.test.scan.boundary_scale = T;
            try {
              const auto res = detect_change_point(
                  data, t_star, t_cur, dc,
                  derive_seed(seed, {stream::kKappa, static_cast<std::uint64_t>(k)}));
              if (res.j0 >= 0) t_star = res.t_hat;
            } catch (const std::exception&) {
              // keep the previous change point
            }
            break;
          }
          case OnlineMethod::Overall: break;
          case OnlineMethod::Random:
            t_star = uniform_time(t_star, t_cur,
                                  derive_seed(seed, {stream::kBaseline, static_cast<std::uint64_t>(k)}));
            break;
          case OnlineMethod::Oracle: t_star = problem.oracle_change_point(t_cur - 1); break;
          case OnlineMethod::Kernel: break;
        }
      }
      trace.t_star.push_back(t_star);

      PolicyFn policy;
      if (method.method == OnlineMethod::Kernel) {
        const TransitionBatch all = slice_interval(data, 0, t_cur);
        std::vector<double> w(all.size());
        for (std::size_t r = 0; r < all.size(); ++r)
          w[r] = kernel_weight(all.time[r], t_cur, method.bandwidth, cfg.batch_len);
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        Rng rng(derive_seed(seed, {stream::kKernel, static_cast<std::uint64_t>(k)}));
        const auto draws = static_cast<long long>(
            std::llround(cfg.kernel_sample_factor * N * static_cast<double>(t_cur)));
        std::vector<double> counts(all.size(), 0.0);
        for (long long b = 0; b < draws; ++b) counts[pick(rng)] += 1.0;
        policy = learner.fit(data, 0, t_cur, counts, batch_seed);
      } else {
        const int start = std::clamp(t_star, 0, t_cur - 1);
        policy = learner.fit(data, start, t_cur, {}, batch_seed);
      }

      for (int i = 0; i < N; ++i) {
        auto& env = envs[i];
        for (int step = 0; step < cfg.batch_len; ++step) {
          const int t = env.t;
          Rng rng(derive_seed(problem.explore_seed,
                              {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t)}));
          std::uniform_real_distribution<double> u01(0.0, 1.0);
          int a;
          if (u01(rng) < cfg.explore_eps)
            a = u01(rng) < 0.5 ? 0 : 1;
          else
            a = policy(env.state);
          const EnvStep st = step_env(env, problem.env, a);
          hist.actions[i].push_back(a);
          hist.rewards[i].push_back(st.reward);
          hist.states[i].push_back(st.next_state[0]);
          trace.rewards[i].push_back(st.reward);
        }
      }
      t_cur += cfg.batch_len;
      hist.T = t_cur;
    }
    out.push_back(std::move(trace));
  }
  return out;
}

void write_online_csv(const std::filesystem::path& path, int rep,
                      const std::vector<ValueTrace>& traces, bool append) {
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.precision(17);
  if (!append) f << "rep,method,value,t_star_trace\n";
  for (const auto& tr : traces) {
    f << rep << ',' << tr.method << ',' << tr.value() << ',';
    for (std::size_t k = 0; k < tr.t_star.size(); ++k) f << (k ? ";" : "") << tr.t_star[k];
    f << '\n';
  }
}

}  // namespace cusumrl
