#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <span>
#include <vector>

#include "cusumrl/trajectory.hpp"

namespace cusumrl {

/// psi(x) / (psi(x) + psi(1 - x)) with psi(x) = exp(-1/x) for x > 0, else 0.
double smooth_step(double x);

/// f1(x) + (f2(x) - f1(x)) smooth_step((x - s0) / (s1 - s0)); requires s0 < s1.
double smooth_interp(const std::function<double(double)>& f1,
                     const std::function<double(double)>& f2, double s0, double s1, double x);

/// One-dimensional scenarios:
///   1  reward -1.5 d a s before t_star, d a s after; s' = 0.5 a s + z
///   2  as 1 with the reward blended over [t_star - w T, t_star)
///   3  s' = -0.5 a s + z before, 0.5 a s + z after; reward 0.25 d a s^2 + 4 s
///   4  as 3 with the transition blended
/// where d is the signal level and w the smooth width fraction.
struct ScenarioSpec {
  int kind = 1;
  int N = 100;
  int T = 100;
  int t_star = 50;
  double signal = 1.0;
  double smooth_width = 0.1;
  double noise_sd = 0.5;
  double init_sd = 0.7071067811865476;  // variance 0.5
  double action_prob = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Weight of the post-change regime at time t (0 before, 1 after, smooth in
/// between for kinds 2 and 4).
double regime_weight(const ScenarioSpec& spec, int t);

/// Dynamics of the 1-d scenarios with the action effect scaled by `sign`
/// (1 is the post-change regime, -1 its reversal; kinds 1/2 use
/// r = sign d a s outside the offline pre-change regime).
struct ScenarioStep {
  double next_state;
  double reward;
};
ScenarioStep scenario_step(int kind, double signal, double regime, double s, int a, double z);

Dataset gen_scenario(const ScenarioSpec& spec, std::uint64_t seed);

/// Transition matrix rows (steps, sleep, mood) acting on
/// (1, steps, steps lagged, sleep, mood);
/// regime 1 before the change, 2 after.
Eigen::Matrix<double, 3, 5> ihs_transition(int regime, int a);

struct IhsSpec {
  int N = 100;
  int T = 50;
  int t_star = 25;
  double action_prob = 0.25;

  void validate() const;
  nlohmann::json to_json() const;
};

/// States (steps_t, sleep_t, mood_t, steps_{t-1}); reward R_t = steps_t.
Dataset gen_ihs(const IhsSpec& spec, std::uint64_t seed);
/// Applies one transition without noise added (noise passed in explicitly).
std::vector<double> ihs_step(std::span<const double> s, int a, int regime,
                             std::span<const double> noise);

/// Change times of a rate `rate` Poisson process started at t_begin, rounded
/// up to integers, kept if < t_end. Duplicates after rounding collapse.
std::vector<int> poisson_schedule(double rate, int t_begin, int t_end, std::uint64_t seed);

struct EnvConfig {
  int kind = 1;
  double signal = 1.0;
  double noise_sd = 0.5;
  /// Blend width for kinds 2/4, as a fraction of `smooth_scale`.
  double smooth_width = 0.1;
  int smooth_scale = 100;
};

/// One simulated subject. The action effect starts in the offline post-change
/// regime and reverses at every scheduled change. Noise at time t is drawn
/// from a stream keyed by (noise_seed, t), so two copies of an environment
/// see identical noise whatever actions they take.
struct EnvState {
  std::vector<double> state;
  int t = 0;
  std::vector<int> schedule;
  std::uint64_t noise_seed = 0;
};

/// +1 / -1 (blended for smooth kinds) action-effect sign at time t.
double regime_sign(const EnvConfig& cfg, std::span<const int> schedule, int t);

struct EnvStep {
  std::vector<double> next_state;
  double reward;
};
EnvStep step_env(EnvState& env, const EnvConfig& cfg, int a);

}  // namespace cusumrl
