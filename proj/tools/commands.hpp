#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cusumrl::cli {

/// Bad flag values or config entries (exit code 2).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Missing inputs or unwritable outputs (exit code 4).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out = ".";
  double gamma = 0.9;
  double alpha = 0.05;
  double epsilon = 0.1;
  /// Comma-separated lists.
  std::string stats = "integral";
  int bootstrap_b = 2000;
  int reps = 4;
  double tau = 0.1;

  // generators
  std::string scenario = "1";
  int n = 0;
  int horizon = 0;
  int tstar = 0;
  double signal = 1.0;
  double smooth_width = 0.1;
  double noise_sd = 0.5;
  double action_prob = -1.0;

  // test / detect
  std::string data;
  int t0 = 0;
  int window_end = 0;
  int num_actions = 0;
  int features = 0;
  std::string cv_candidates = "4,6,8,10";
  int cv_folds = 5;
  int stride = 0;
  bool no_standardize = false;
  int kappa_min = 25;
  int kappa_max = 75;
  int kappa_step = 5;
  bool full_scan = false;

  // online
  std::string methods = "proposed,overall,random,oracle";
  int batch_len = 25;
  int batches = 8;
  double explore_eps = 0.1;
  double change_rate = 0.02;
  int replications = 1;
  int first_rep = 0;
  bool linear_policy = false;

  // report
  std::vector<std::string> inputs;
};

/// Resolved configuration as INI text, without the keys that do not affect
/// results (workers, out, config).
using ConfigText = std::string;

int cmd_simulate(const Options& o, const ConfigText& config);
int cmd_test(const Options& o, const ConfigText& config);
int cmd_detect(const Options& o, const ConfigText& config);
int cmd_online(const Options& o, const ConfigText& config);
int cmd_report(const Options& o, const ConfigText& config);

/// Parses argv, dispatches, and maps failures to exit codes.
int run(int argc, char** argv);

}  // namespace cusumrl::cli
