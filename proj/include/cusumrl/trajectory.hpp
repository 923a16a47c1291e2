#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cusumrl {

/// Raised by the CSV loader; the message carries the offending line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// N trajectories of (state, action, reward) over a common grid t = 0..T.
/// States carry one more time index than actions/rewards. Immutable after
/// construction.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int num_trajectories, int horizon, int state_dim, int num_actions, int t0,
          std::vector<double> states, std::vector<int> actions, std::vector<double> rewards);

  int num_trajectories() const noexcept { return n_; }
  int horizon() const noexcept { return horizon_; }
  int state_dim() const noexcept { return dim_; }
  int num_actions() const noexcept { return m_; }
  int t0() const noexcept { return t0_; }

  std::span<const double> state(int i, int t) const noexcept {
    return {states_.data() + state_offset(i, t), static_cast<std::size_t>(dim_)};
  }
  int action(int i, int t) const noexcept { return actions_[step_offset(i, t)]; }
  double reward(int i, int t) const noexcept { return rewards_[step_offset(i, t)]; }

  const std::vector<double>& states() const noexcept { return states_; }
  const std::vector<int>& actions() const noexcept { return actions_; }
  const std::vector<double>& rewards() const noexcept { return rewards_; }

  /// Same trajectories with states replaced (layout i-major, then t, then dim).
  Dataset with_states(std::vector<double> states) const;
  Dataset with_rewards(std::vector<double> rewards) const;
  Dataset with_t0(int t0) const;
  /// Keeps only the listed trajectories, in the given order.
  Dataset select_trajectories(std::span<const int> ids) const;

 private:
  std::size_t state_offset(int i, int t) const noexcept {
    return (static_cast<std::size_t>(i) * (horizon_ + 1) + t) * dim_;
  }
  std::size_t step_offset(int i, int t) const noexcept {
    return static_cast<std::size_t>(i) * horizon_ + t;
  }

  int n_ = 0, horizon_ = 0, dim_ = 0, m_ = 0, t0_ = 0;
  std::vector<double> states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
};

/// Flattened transitions (s, a, r, s') for source times t in [t1, t2),
/// i-major then t. Provenance (trajectory, time) is kept per row.
struct TransitionBatch {
  int t1 = 0;
  int t2 = 0;
  int state_dim = 0;
  int num_actions = 0;
  std::vector<double> s;
  std::vector<double> s_next;
  std::vector<int> a;
  std::vector<double> r;
  std::vector<int> traj;
  std::vector<int> time;

  std::size_t size() const noexcept { return a.size(); }
  std::span<const double> state(std::size_t row) const noexcept {
    return {s.data() + row * state_dim, static_cast<std::size_t>(state_dim)};
  }
  std::span<const double> next_state(std::size_t row) const noexcept {
    return {s_next.data() + row * state_dim, static_cast<std::size_t>(state_dim)};
  }
  void push_back(std::span<const double> state, int action, double reward,
                 std::span<const double> next, int trajectory, int t);
};

/// Throws std::out_of_range unless ds.t0() <= t1 < t2 <= T.
TransitionBatch slice_interval(const Dataset& ds, int t1, int t2);
/// Restricted to a subset of trajectories (kept in the listed order).
TransitionBatch slice_interval(const Dataset& ds, int t1, int t2, std::span<const int> trajectories);

/// Per-dimension location/scale used to standardize states.
struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> sd;

  void apply_inplace(std::span<double> state) const;
  Dataset apply(const Dataset& ds) const;
};

/// Population mean/SD over all states with t in [t1, t2]. Dimensions with
/// zero spread get sd = 1.
ScalerParams fit_scaler(const Dataset& ds, int t1, int t2);

/// CSV schema: header `i,t,a,r,s1,...,sd`; rows t = 0..T-1 per trajectory
/// followed by a row with t = T and empty a/r carrying the terminal state.
/// Lines starting with `#` are ignored on read.
void write_csv(const Dataset& ds, const std::filesystem::path& path);
/// num_actions <= 0 infers m = max action + 1 (at least 2).
Dataset read_csv(const std::filesystem::path& path, int num_actions = 0, int t0 = 0);

}  // namespace cusumrl
