#include "cusumrl/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cusumrl {

Dataset::Dataset(int num_trajectories, int horizon, int state_dim, int num_actions, int t0,
                 std::vector<double> states, std::vector<int> actions,
                 std::vector<double> rewards)
    : n_(num_trajectories),
      horizon_(horizon),
      dim_(state_dim),
      m_(num_actions),
      t0_(t0),
      states_(std::move(states)),
      actions_(std::move(actions)),
      rewards_(std::move(rewards)) {
  if (n_ < 1) throw std::invalid_argument("dataset: no trajectories");
  if (horizon_ < 1 || dim_ < 1 || m_ < 1)
    throw std::invalid_argument("dataset: horizon, state_dim and num_actions must be positive");
  if (t0_ < 0 || t0_ >= horizon_) throw std::invalid_argument("dataset: need 0 <= t0 < T");
  const auto steps = static_cast<std::size_t>(n_) * horizon_;
  if (states_.size() != static_cast<std::size_t>(n_) * (horizon_ + 1) * dim_ ||
      actions_.size() != steps || rewards_.size() != steps)
    throw std::invalid_argument("dataset: tensor sizes disagree with N, T, d");
  for (int a : actions_)
    if (a < 0 || a >= m_) throw std::invalid_argument("dataset: action outside [0, m)");
}

Dataset Dataset::with_states(std::vector<double> states) const {
  return Dataset(n_, horizon_, dim_, m_, t0_, std::move(states), actions_, rewards_);
}

Dataset Dataset::with_rewards(std::vector<double> rewards) const {
  return Dataset(n_, horizon_, dim_, m_, t0_, states_, actions_, std::move(rewards));
}

Dataset Dataset::with_t0(int t0) const {
  return Dataset(n_, horizon_, dim_, m_, t0, states_, actions_, rewards_);
}

Dataset Dataset::select_trajectories(std::span<const int> ids) const {
  std::vector<double> s;
  std::vector<int> a;
  std::vector<double> r;
  const std::size_t srow = static_cast<std::size_t>(horizon_ + 1) * dim_;
  for (int i : ids) {
    if (i < 0 || i >= n_) throw std::out_of_range("select_trajectories: bad trajectory id");
    s.insert(s.end(), states_.begin() + i * srow, states_.begin() + (i + 1) * srow);
    a.insert(a.end(), actions_.begin() + static_cast<std::size_t>(i) * horizon_,
             actions_.begin() + static_cast<std::size_t>(i + 1) * horizon_);
    r.insert(r.end(), rewards_.begin() + static_cast<std::size_t>(i) * horizon_,
             rewards_.begin() + static_cast<std::size_t>(i + 1) * horizon_);
  }
  return Dataset(static_cast<int>(ids.size()), horizon_, dim_, m_, t0_, std::move(s),
                 std::move(a), std::move(r));
}

void TransitionBatch::push_back(std::span<const double> state, int action, double reward,
                                std::span<const double> next, int trajectory, int t) {
  s.insert(s.end(), state.begin(), state.end());
  s_next.insert(s_next.end(), next.begin(), next.end());
  a.push_back(action);
  r.push_back(reward);
  traj.push_back(trajectory);
  time.push_back(t);
}

TransitionBatch slice_interval(const Dataset& ds, int t1, int t2,
                               std::span<const int> trajectories) {
  if (t1 < ds.t0() || t1 >= t2 || t2 > ds.horizon())
    throw std::out_of_range("slice_interval: need t0 <= t1 < t2 <= T, got [" +
                            std::to_string(t1) + ", " + std::to_string(t2) + ")");
  TransitionBatch b;
  b.t1 = t1;
  b.t2 = t2;
  b.state_dim = ds.state_dim();
  b.num_actions = ds.num_actions();
  const std::size_t rows = trajectories.size() * static_cast<std::size_t>(t2 - t1);
  b.s.reserve(rows * b.state_dim);
  b.s_next.reserve(rows * b.state_dim);
  b.a.reserve(rows);
  b.r.reserve(rows);
  b.traj.reserve(rows);
  b.time.reserve(rows);
  for (int i : trajectories)
    for (int t = t1; t < t2; ++t)
      b.push_back(ds.state(i, t), ds.action(i, t), ds.reward(i, t), ds.state(i, t + 1), i, t);
  return b;
}

TransitionBatch slice_interval(const Dataset& ds, int t1, int t2) {
  std::vector<int> all(ds.num_trajectories());
  for (int i = 0; i < ds.num_trajectories(); ++i) all[i] = i;
  return slice_interval(ds, t1, t2, all);
}

void ScalerParams::apply_inplace(std::span<double> state) const {
  for (std::size_t k = 0; k < state.size(); ++k) state[k] = (state[k] - mean[k]) / sd[k];
}

Dataset ScalerParams::apply(const Dataset& ds) const {
  std::vector<double> s = ds.states();
  const auto d = static_cast<std::size_t>(ds.state_dim());
  for (std::size_t off = 0; off < s.size(); off += d) apply_inplace({s.data() + off, d});
  return ds.with_states(std::move(s));
}

ScalerParams fit_scaler(const Dataset& ds, int t1, int t2) {
  if (t1 < 0 || t1 > t2 || t2 > ds.horizon()) throw std::out_of_range("fit_scaler: bad interval");
  const int d = ds.state_dim();
  ScalerParams p;
  p.mean.assign(d, 0.0);
  p.sd.assign(d, 0.0);
  const double count = static_cast<double>(ds.num_trajectories()) * (t2 - t1 + 1);
  for (int i = 0; i < ds.num_trajectories(); ++i)
    for (int t = t1; t <= t2; ++t) {
      auto s = ds.state(i, t);
      for (int k = 0; k < d; ++k) p.mean[k] += s[k];
    }
  for (auto& m : p.mean) m /= count;
  for (int i = 0; i < ds.num_trajectories(); ++i)
    for (int t = t1; t <= t2; ++t) {
      auto s = ds.state(i, t);
      for (int k = 0; k < d; ++k) p.sd[k] += (s[k] - p.mean[k]) * (s[k] - p.mean[k]);
    }
  for (int k = 0; k < d; ++k) {
    const double sd = std::sqrt(p.sd[k] / count);
    // constant dimension: relative tolerance against the location
    p.sd[k] = (sd > 1e-12 * std::max(1.0, std::abs(p.mean[k]))) ? sd : 1.0;
  }
  return p;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view v) {
  while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r'))
    v.remove_suffix(1);
  return v;
}

template <class T>
bool parse_number(std::string_view field, T& out) {
  field = trim(field);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

}  // namespace

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::string out = "i,t,a,r";
  for (int k = 0; k < ds.state_dim(); ++k) out += ",s" + std::to_string(k + 1);
  out += '\n';
  for (int i = 0; i < ds.num_trajectories(); ++i) {
    for (int t = 0; t <= ds.horizon(); ++t) {
      out += std::to_string(i);
      out += ',';
      out += std::to_string(t);
      out += ',';
      if (t < ds.horizon()) {
        out += std::to_string(ds.action(i, t));
        out += ',';
        append_double(out, ds.reward(i, t));
      } else {
        out += ',';
      }
      for (double v : ds.state(i, t)) {
        out += ',';
        append_double(out, v);
      }
      out += '\n';
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << out;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, int num_actions, int t0) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  int dim = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!trim(line).empty() && trim(line)[0] != '#') break;
  }
  if (trim(line).empty()) throw ParseError("no trajectories", lineno);
  {
    auto head = split_fields(trim(line));
    if (head.size() < 5 || trim(head[0]) != "i" || trim(head[1]) != "t" || trim(head[2]) != "a" ||
        trim(head[3]) != "r")
      throw ParseError("expected header i,t,a,r,s1,...,sd", lineno);
    dim = static_cast<int>(head.size()) - 4;
    for (int k = 0; k < dim; ++k)
      if (trim(head[4 + k]) != "s" + std::to_string(k + 1))
        throw ParseError("state columns must be named s1..sd", lineno);
  }

  std::vector<double> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  int horizon = -1;
  int current_i = -1;
  int expected_t = 0;
  int trajectories = 0;
  int max_action = 0;
  bool closed = true;  // the current trajectory has seen its terminal row

  while (std::getline(f, line)) {
    ++lineno;
    auto view = trim(line);
    if (view.empty() || view[0] == '#') continue;
    auto fields = split_fields(view);
    if (static_cast<int>(fields.size()) != 4 + dim)
      throw ParseError("expected " + std::to_string(4 + dim) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    int i = 0, t = 0;
    if (!parse_number(fields[0], i) || !parse_number(fields[1], t))
      throw ParseError("trajectory and time indices must be integers", lineno);
    if (i != current_i) {
      if (!closed) throw ParseError("trajectory " + std::to_string(current_i) +
                                        " ended without a terminal row (ragged input)",
                                    lineno);
      if (i != trajectories) throw ParseError("trajectory ids must be 0,1,2,... in order", lineno);
      current_i = i;
      expected_t = 0;
      closed = false;
      ++trajectories;
    }
    if (closed) throw ParseError("rows after the terminal row of trajectory " + std::to_string(i), lineno);
    if (t != expected_t) throw ParseError("expected t=" + std::to_string(expected_t), lineno);
    const bool terminal = trim(fields[2]).empty() && trim(fields[3]).empty();
    if (terminal) {
      if (horizon < 0) {
        if (t < 1) throw ParseError("trajectory needs at least one transition", lineno);
        horizon = t;
      } else if (t != horizon) {
        throw ParseError("ragged trajectories: length " + std::to_string(t) + " vs " +
                             std::to_string(horizon),
                         lineno);
      }
      closed = true;
    } else {
      if (horizon >= 0 && t >= horizon)
        throw ParseError("ragged trajectories: longer than T=" + std::to_string(horizon), lineno);
      int a = 0;
      double r = 0;
      if (!parse_number(fields[2], a)) throw ParseError("action must be an integer", lineno);
      if (a < 0) throw ParseError("negative action", lineno);
      if (num_actions > 0 && a >= num_actions)
        throw ParseError("action " + std::to_string(a) + " outside [0, " +
                             std::to_string(num_actions) + ")",
                         lineno);
      if (!parse_number(fields[3], r) || !std::isfinite(r))
        throw ParseError("reward must be a finite number", lineno);
      max_action = std::max(max_action, a);
      actions.push_back(a);
      rewards.push_back(r);
    }
    for (int k = 0; k < dim; ++k) {
      double v = 0;
      if (!parse_number(fields[4 + k], v) || !std::isfinite(v))
        throw ParseError("state value s" + std::to_string(k + 1) + " is not a finite number",
                         lineno);
      states.push_back(v);
    }
    ++expected_t;
  }
  if (trajectories == 0) throw ParseError("no trajectories", lineno);
  if (!closed) throw ParseError("last trajectory has no terminal row", lineno);
  const int m = num_actions > 0 ? num_actions : std::max(2, max_action + 1);
  if (t0 >= horizon) throw ParseError("t0 must be below T", lineno);
  return Dataset(trajectories, horizon, dim, m, t0, std::move(states), std::move(actions),
                 std::move(rewards));
}

}  // namespace cusumrl
