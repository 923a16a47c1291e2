#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "cusumrl/detect.hpp"
#include "cusumrl/sim.hpp"
#include "cusumrl/tree.hpp"

namespace cusumrl {

enum class OnlineMethod { Proposed, Overall, Random, Kernel, Oracle };

struct MethodSpec {
  OnlineMethod method = OnlineMethod::Proposed;
  double bandwidth = 0.0;  // kernel only

  /// "proposed", "overall", "random", "oracle", "kernel(0.2)"
  std::string label() const;
  static MethodSpec parse(const std::string& text);
};

/// Gaussian kernel weight exp(-((T - t) / (T h))^2) of a transition at time
/// t when data end at T; h = 0 keeps only the last batch.
double kernel_weight(int t, int T, double h, int batch_len);

/// Overrides change-point detection inside the loop (used to inject a
/// detector): returns T*(k) given the data, the previous T*, and k.
using Detector = std::function<int(const Dataset& data, int t_prev, int k)>;

struct OnlineConfig {
  int batch_len = 25;
  int n_batches = 8;
  int t_end = 300;
  double explore_eps = 0.1;
  std::vector<MethodSpec> methods{{OnlineMethod::Proposed}, {OnlineMethod::Overall},
                                  {OnlineMethod::Random}, {OnlineMethod::Oracle}};
  FqiConfig fqi;
  TreeCvGrid tree_grid;
  int tree_folds = 5;
  int tree_iterations = 50;
  /// Cross-validate tree hyperparameters at every refit instead of only the
  /// first one.
  bool tree_cv_every_batch = false;
  /// Linear-sieve policies instead of trees.
  bool linear_policy = false;
  int linear_features = 8;
  /// Resample size for the kernel method, per subject and time point.
  double kernel_sample_factor = 10.0;
  /// Offline detection settings; the re-scan grid runs from kappa_min in
  /// steps of kappa_step up to the span of the data being scanned.
  DetectConfig detect;
  int kappa_min = 25;
  int kappa_step = 5;
  Detector detector;  // optional override

  void validate(int offline_T) const;
};

/// Offline data plus the future of the same subjects.
struct OnlineProblem {
  Dataset offline;
  EnvConfig env;
  std::vector<int> schedule;  // change times after the offline horizon
  int offline_change = 0;     // change inside the offline data
  std::uint64_t noise_seed = 0;
  std::uint64_t explore_seed = 0;

  /// Latest true change point at or before t (0 if none).
  int oracle_change_point(int t) const;
};

OnlineProblem make_online_problem(const ScenarioSpec& offline, double change_rate, int t_end,
                                  std::uint64_t seed);

struct ValueTrace {
  std::string method;
  int T = 0;
  /// rewards[i][t - T] for t = T .. t_end-1
  std::vector<std::vector<double>> rewards;
  /// T*(0), ..., T*(K-1): segment start used to learn each batch's policy
  /// (-1 for the kernel method).
  std::vector<int> t_star;

  double value() const;
  /// (1 - gamma) sum_t gamma^(t-T) r_t averaged over subjects.
  double discounted_value(double gamma) const;
};

struct ValueSummary {
  double mean = 0.0;
  double discounted = 0.0;
};
ValueSummary evaluate_value(const ValueTrace& trace, double gamma);

std::vector<ValueTrace> run_online(const OnlineProblem& problem, const OnlineConfig& cfg,
                                   std::uint64_t seed);

/// rep,method,value,t_star_trace
void write_online_csv(const std::filesystem::path& path, int rep,
                      const std::vector<ValueTrace>& traces, bool append);

}  // namespace cusumrl
