#include "cusumrl/sim.hpp"

#include <cmath>
#include <stdexcept>

#include "cusumrl/random.hpp"

namespace cusumrl {

namespace {

double psi(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }

}  // namespace

double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = psi(x);
  const double b = psi(1.0 - x);
  return a / (a + b);
}

double smooth_interp(const std::function<double(double)>& f1,
                     const std::function<double(double)>& f2, double s0, double s1, double x) {
  if (!(s0 < s1)) throw std::invalid_argument("smooth_interp: need s0 < s1");
  const double w = smooth_step((x - s0) / (s1 - s0));
  const double a = f1(x);
  if (w == 0.0) return a;
  const double b = f2(x);
  if (w == 1.0) return b;
  return a + (b - a) * w;
}

void ScenarioSpec::validate() const {
  if (kind < 1 || kind > 4) throw std::invalid_argument("scenario must be 1, 2, 3 or 4");
  if (N < 1) throw std::invalid_argument("N must be positive");
  if (T < 2) throw std::invalid_argument("T must be at least 2");
  if (!(0 < t_star && t_star <= T))
    throw std::invalid_argument("tstar must satisfy 0 < tstar <= T");
  if (!(smooth_width >= 0.0 && smooth_width < 0.5))
    throw std::invalid_argument("smooth width must lie in [0, 0.5)");
  if (!(noise_sd >= 0.0) || !(init_sd >= 0.0))
    throw std::invalid_argument("noise and initial SD must be nonnegative");
  if (!(action_prob >= 0.0 && action_prob <= 1.0))
    throw std::invalid_argument("action probability must lie in [0, 1]");
}

nlohmann::json ScenarioSpec::to_json() const {
  return {{"scenario", kind},      {"N", N},
          {"T", T},                {"tstar", t_star},
          {"signal", signal},      {"smooth_width", smooth_width},
          {"noise_sd", noise_sd},  {"init_sd", init_sd},
          {"action_prob", action_prob}};
}

double regime_weight(const ScenarioSpec& spec, int t) {
  if (t >= spec.t_star) return 1.0;
  const bool smooth = spec.kind == 2 || spec.kind == 4;
  const double width = spec.smooth_width * spec.T;
  if (!smooth || width <= 0.0) return 0.0;
  const double s0 = spec.t_star - width;
  if (t < s0) return 0.0;
  return smooth_step((t - s0) / width);
}

ScenarioStep scenario_step(int kind, double signal, double regime, double s, int a, double z) {
  ScenarioStep out{};
  if (kind == 1 || kind == 2) {
    out.next_state = 0.5 * a * s + z;
    out.reward = regime * signal * a * s;
  } else {
    out.next_state = regime * 0.5 * a * s + z;
    out.reward = 0.25 * signal * a * s * s + 4.0 * s;
  }
  return out;
}

Dataset gen_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int N = spec.N, T = spec.T;
  std::vector<double> states(static_cast<std::size_t>(N) * (T + 1));
  std::vector<int> actions(static_cast<std::size_t>(N) * T);
  std::vector<double> rewards(static_cast<std::size_t>(N) * T);
  for (int i = 0; i < N; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(spec.action_prob);
    double s = spec.init_sd * normal(rng);
    states[static_cast<std::size_t>(i) * (T + 1)] = s;
    for (int t = 0; t < T; ++t) {
      const int a = coin(rng) ? 1 : 0;
      const double z = spec.noise_sd * normal(rng);
      const double w = regime_weight(spec, t);
      double next, r;
      if (spec.kind == 1 || spec.kind == 2) {
        // blend r1 = -1.5 d a s into r2 = d a s
        next = 0.5 * a * s + z;
        const double r1 = -1.5 * spec.signal * a * s;
        const double r2 = spec.signal * a * s;
        r = r1 + (r2 - r1) * w;
      } else {
        const double f1 = -0.5 * a * s;
        const double f2 = 0.5 * a * s;
        next = f1 + (f2 - f1) * w + z;
        r = 0.25 * spec.signal * a * s * s + 4.0 * s;
      }
      actions[static_cast<std::size_t>(i) * T + t] = a;
      rewards[static_cast<std::size_t>(i) * T + t] = r;
      s = next;
      states[static_cast<std::size_t>(i) * (T + 1) + t + 1] = s;
    }
  }
  return Dataset(N, T, 1, 2, 0, std::move(states), std::move(actions), std::move(rewards));
}

Eigen::Matrix<double, 3, 5> ihs_transition(int regime, int a) {
  if (regime != 1 && regime != 2) throw std::invalid_argument("ihs_transition: regime 1 or 2");
  const double x = a;
  Eigen::Matrix<double, 3, 5> w;
  if (regime == 1) {
    w << 10 + 0.6 * x, 0.4 + 0.3 * x, 0.1 - 0.1 * x, -0.04, 0.1,  //
        11 - 0.4 * x, 0.05, 0, 0.4, 0,                             //
        1.2 - 0.5 * x, -0.02, 0, 0.03 + 0.03 * x, 0.8;
  } else {
    w << 10 - 0.6 * x, 0.4 - 0.3 * x, 0.1 + 0.1 * x, 0.04, -0.1,  //
        11 - 0.4 * x, 0.05, 0, 0.4, 0,                             //
        1.2 + 0.5 * x, -0.02, 0, 0.03 - 0.03 * x, 0.8;
  }
  return w;
}

void IhsSpec::validate() const {
  if (N < 1) throw std::invalid_argument("N must be positive");
  if (!(0 < t_star && t_star < T)) throw std::invalid_argument("tstar must satisfy 0 < tstar < T");
  if (!(action_prob >= 0.0 && action_prob <= 1.0))
    throw std::invalid_argument("action probability must lie in [0, 1]");
}

nlohmann::json IhsSpec::to_json() const {
  return {{"generator", "ihs"}, {"N", N}, {"T", T}, {"tstar", t_star}, {"action_prob", action_prob}};
}

std::vector<double> ihs_step(std::span<const double> s, int a, int regime,
                             std::span<const double> noise) {
  Eigen::Matrix<double, 5, 1> tilde;
  tilde << 1.0, s[0], s[3], s[1], s[2];
  const Eigen::Vector3d mean = ihs_transition(regime, a) * tilde;
  return {mean(0) + noise[0], mean(1) + noise[1], mean(2) + noise[2], s[0]};
}

Dataset gen_ihs(const IhsSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int N = spec.N, T = spec.T, d = 4;
  std::vector<double> states(static_cast<std::size_t>(N) * (T + 1) * d);
  std::vector<int> actions(static_cast<std::size_t>(N) * T);
  std::vector<double> rewards(static_cast<std::size_t>(N) * T);
  const double noise_sd[3] = {1.0, 1.0, std::sqrt(0.2)};
  for (int i = 0; i < N; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(spec.action_prob);
    std::vector<double> s(d);
    s[0] = 20.0 + std::sqrt(3.0) * normal(rng);
    s[1] = 20.0 + std::sqrt(2.0) * normal(rng);
    s[2] = 7.0 + normal(rng);
    s[3] = 20.0 + std::sqrt(3.0) * normal(rng);
    auto put = [&](int t) {
      for (int k = 0; k < d; ++k)
        states[(static_cast<std::size_t>(i) * (T + 1) + t) * d + k] = s[k];
    };
    put(0);
    for (int t = 0; t < T; ++t) {
      const int a = coin(rng) ? 1 : 0;
      double z[3];
      for (int k = 0; k < 3; ++k) z[k] = noise_sd[k] * normal(rng);
      actions[static_cast<std::size_t>(i) * T + t] = a;
      rewards[static_cast<std::size_t>(i) * T + t] = s[0];
      s = ihs_step(s, a, t < spec.t_star ? 1 : 2, z);
      put(t + 1);
    }
  }
  return Dataset(N, T, d, 2, 0, std::move(states), std::move(actions), std::move(rewards));
}

std::vector<int> poisson_schedule(double rate, int t_begin, int t_end, std::uint64_t seed) {
  if (!(rate > 0.0)) throw std::invalid_argument("poisson_schedule: rate must be positive");
  Rng rng(seed);
  std::exponential_distribution<double> gap(rate);
  std::vector<int> out;
  double c = t_begin;
  while (true) {
    c += gap(rng);
    if (c >= t_end) break;
    const int k = static_cast<int>(std::ceil(c));
    if (k >= t_end) break;
    if (out.empty() || k > out.back()) out.push_back(k);
  }
  return out;
}

double regime_sign(const EnvConfig& cfg, std::span<const int> schedule, int t) {
  const bool smooth = cfg.kind == 2 || cfg.kind == 4;
  const double width = cfg.smooth_width * cfg.smooth_scale;
  double sign = 1.0;
  for (int c : schedule) {
    if (t >= c) {
      sign = -sign;
      continue;
    }
    // upcoming change: blend toward the reversed sign just before it
    if (smooth && width > 0.0 && t >= c - width)
      return sign + (-sign - sign) * smooth_step((t - (c - width)) / width);
    break;
  }
  return sign;
}

EnvStep step_env(EnvState& env, const EnvConfig& cfg, int a) {
  if (a < 0 || a > 1) throw std::invalid_argument("step_env: binary action expected");
  Rng rng(derive_seed(env.noise_seed, {static_cast<std::uint64_t>(env.t)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double z = cfg.noise_sd * normal(rng);
  const double sign = regime_sign(cfg, env.schedule, env.t);
  const ScenarioStep st = scenario_step(cfg.kind, cfg.signal, sign, env.state[0], a, z);
  env.state = {st.next_state};
  ++env.t;
  return {env.state, st.reward};
}

}  // namespace cusumrl
