#include "cusumrl/sieve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "cusumrl/random.hpp"

namespace cusumrl {

Eigen::VectorXd FeatureMap::evaluate_one(std::span<const double> s) const {
  if (static_cast<int>(s.size()) != state_dim())
    throw std::invalid_argument("feature map: state has dimension " + std::to_string(s.size()) +
                                ", expected " + std::to_string(state_dim()));
  StateMatrix one(1, s.size());
  for (std::size_t k = 0; k < s.size(); ++k) one(0, k) = s[k];
  return evaluate(one).row(0).transpose();
}

Eigen::MatrixXd BasisSpec::evaluate(const StateMatrix& states) const {
  if (states.cols() != dim) throw std::invalid_argument("BasisSpec: state dimension mismatch");
  Eigen::MatrixXd z = states * frequencies.transpose();
  z.rowwise() += offsets.transpose();
  const double scale = std::sqrt(2.0 / num_features);
  return (z.array().cos() * scale).matrix();
}

Eigen::MatrixXd IndicatorBasis::evaluate(const StateMatrix& states) const {
  if (states.cols() != 1) throw std::invalid_argument("IndicatorBasis: expects scalar states");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(states.rows(), num_states);
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    const long k = std::lround(states(r, 0));
    if (k < 0 || k >= num_states) throw std::invalid_argument("IndicatorBasis: state out of range");
    out(r, k) = 1.0;
  }
  return out;
}

double median_heuristic_gamma(const StateMatrix& states, std::uint64_t seed, int max_points) {
  const auto n = static_cast<int>(states.rows());
  if (n < 2) throw std::invalid_argument("median heuristic: need at least two points");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n > max_points) {
    Rng rng(seed);
    // partial Fisher-Yates: first max_points entries form a uniform subsample
    for (int k = 0; k < max_points; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
  }
  const auto p = idx.size();
  std::vector<double> dist;
  dist.reserve(p * (p - 1) / 2);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a + 1; b < p; ++b)
      dist.push_back((states.row(idx[a]) - states.row(idx[b])).norm());
  auto lower_median = [](std::vector<double>& v) {
    auto mid = v.begin() + (v.size() - 1) / 2;
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  double med = lower_median(dist);
  if (med <= 0.0) {
    std::vector<double> positive;
    for (double d : dist)
      if (d > 0.0) positive.push_back(d);
    if (positive.empty()) throw std::invalid_argument("median heuristic: degenerate sample");
    med = lower_median(positive);
  }
  return 1.0 / (2.0 * med * med);
}

BasisSpec sample_basis(int num_actions, int num_features, int dim, double gamma,
                       std::uint64_t seed) {
  if (num_actions < 1 || num_features < 1 || dim < 1)
    throw std::invalid_argument("sample_basis: need m >= 1, M >= 1, d >= 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("sample_basis: gamma must be positive");
  BasisSpec spec;
  spec.num_actions = num_actions;
  spec.num_features = num_features;
  spec.dim = dim;
  spec.gamma = gamma;
  spec.seed = seed;
  spec.frequencies.resize(num_features, dim);
  spec.offsets.resize(num_features);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 * gamma));
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
  // feature-by-feature draws: the first M' rows of a size-M draw equal a
  // size-M' draw with the same seed, so candidate bases are nested
  for (int j = 0; j < num_features; ++j) {
    for (int k = 0; k < dim; ++k) spec.frequencies(j, k) = normal(rng);
    double b = uniform(rng);
    if (b >= 2.0 * std::numbers::pi) b = 0.0;
    spec.offsets(j) = b;
  }
  return spec;
}

Eigen::VectorXd phi_features(const BasisSpec& spec, std::span<const double> s) {
  return spec.evaluate_one(s);
}

Eigen::VectorXd phi_L(const FeatureMap& map, int num_actions, int a, std::span<const double> s) {
  if (a < 0 || a >= num_actions)
    throw std::invalid_argument("phi_L: action " + std::to_string(a) + " outside [0, " +
                                std::to_string(num_actions) + ")");
  const int M = map.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_actions) * M);
  out.segment(static_cast<Eigen::Index>(a) * M, M) = map.evaluate_one(s);
  return out;
}

StateMatrix states_time_major(const Dataset& ds, int t1, int t2) {
  const int N = ds.num_trajectories();
  StateMatrix out(static_cast<Eigen::Index>(t2 - t1 + 1) * N, ds.state_dim());
  for (int t = t1; t <= t2; ++t)
    for (int i = 0; i < N; ++i) {
      auto s = ds.state(i, t);
      for (int k = 0; k < ds.state_dim(); ++k)
        out(static_cast<Eigen::Index>(t - t1) * N + i, k) = s[k];
    }
  return out;
}

void BasisSpec::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["num_actions"] = num_actions;
  j["num_features"] = num_features;
  j["dim"] = dim;
  j["gamma"] = gamma;
  j["seed"] = seed;
  std::vector<std::vector<double>> freq(num_features, std::vector<double>(dim));
  for (int r = 0; r < num_features; ++r)
    for (int c = 0; c < dim; ++c) freq[r][c] = frequencies(r, c);
  j["frequencies"] = freq;
  j["offsets"] = std::vector<double>(offsets.data(), offsets.data() + offsets.size());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(1) << '\n';
}

BasisSpec BasisSpec::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  BasisSpec spec;
  spec.num_actions = j.at("num_actions");
  spec.num_features = j.at("num_features");
  spec.dim = j.at("dim");
  spec.gamma = j.at("gamma");
  spec.seed = j.at("seed");
  auto freq = j.at("frequencies").get<std::vector<std::vector<double>>>();
  auto off = j.at("offsets").get<std::vector<double>>();
  if (static_cast<int>(freq.size()) != spec.num_features ||
      static_cast<int>(off.size()) != spec.num_features)
    throw std::runtime_error("basis file: feature count mismatch");
  spec.frequencies.resize(spec.num_features, spec.dim);
  spec.offsets.resize(spec.num_features);
  for (int r = 0; r < spec.num_features; ++r) {
    if (static_cast<int>(freq[r].size()) != spec.dim)
      throw std::runtime_error("basis file: frequency row has wrong dimension");
    for (int c = 0; c < spec.dim; ++c) spec.frequencies(r, c) = freq[r][c];
    spec.offsets(r) = off[r];
  }
  return spec;
}

}  // namespace cusumrl
