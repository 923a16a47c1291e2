#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "cusumrl/detect.hpp"
#include "cusumrl/fqi.hpp"
#include "cusumrl/inference.hpp"
#include "cusumrl/online.hpp"
#include "cusumrl/random.hpp"
#include "cusumrl/sim.hpp"
#include "cusumrl/trajectory.hpp"

namespace cusumrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path output_dir(const Options& o) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string comment_block(const ConfigText& config) {
  std::string out;
  std::istringstream in(config);
  std::string line;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

/// Rewrites a CSV written by the library with the config as leading comments.
void embed_config(const fs::path& path, const ConfigText& config) {
  write_text(path, comment_block(config) + read_text(path));
}

void write_sidecars(const fs::path& dir, const std::string& command, const ConfigText& config,
                    json payload) {
  payload["command"] = command;
  payload["config"] = config;
  write_text(dir / (command + ".json"), payload.dump(2) + "\n");
  write_text(dir / (command + "_config.ini"), config);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::vector<int> int_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": expected integers, found '" + item + "'");
    }
  }
  return out;
}

std::vector<StatKind> stat_kinds(const Options& o) {
  std::vector<StatKind> kinds;
  for (const auto& s : split_list(o.stats)) {
    try {
      kinds.push_back(parse_stat_kind(s));
    } catch (const std::exception&) {
      throw UsageError("--stat: unknown statistic '" + s + "'");
    }
  }
  if (kinds.empty()) throw UsageError("--stat: at least one statistic is required");
  return kinds;
}

TestConfig test_config(const Options& o) {
  TestConfig tc;
  tc.fqi.discount = o.gamma;
  tc.scan.epsilon = o.epsilon;
  tc.scan.stride = o.stride;
  tc.bootstrap_b = o.bootstrap_b;
  tc.repetitions = o.reps;
  tc.tau = o.tau;
  tc.standardize = !o.no_standardize;
  tc.cross_validate = o.features <= 0;
  tc.cv_candidates = int_list(o.cv_candidates, "--cv-candidates");
  tc.cv_folds = o.cv_folds;
  if (o.features > 0) tc.num_features = o.features;
  tc.kinds = stat_kinds(o);
  tc.workers = o.workers;
  if (!(o.gamma > 0.0 && o.gamma < 1.0)) throw UsageError("--gamma must lie in (0, 1)");
  if (!(o.alpha > 0.0 && o.alpha <= 1.0)) throw UsageError("--alpha must lie in (0, 1]");
  if (!(o.epsilon > 0.0 && o.epsilon < 0.5)) throw UsageError("--epsilon-boundary must lie in (0, 0.5)");
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return tc;
}

Dataset load_data(const Options& o) {
  if (o.data.empty()) throw UsageError("--data is required");
  if (!fs::exists(o.data)) throw IoError("missing input " + o.data);
  return read_csv(o.data, o.num_actions, 0);
}

int window_end(const Options& o, const Dataset& ds) {
  const int T = o.window_end > 0 ? o.window_end : ds.horizon();
  if (T > ds.horizon()) throw UsageError("--T exceeds the data horizon " + std::to_string(ds.horizon()));
  if (o.t0 < 0 || o.t0 >= T) throw UsageError("--t0 must satisfy 0 <= t0 < T");
  return T;
}

ScenarioSpec scenario_spec(const Options& o) {
  ScenarioSpec spec;
  try {
    spec.kind = std::stoi(o.scenario);
  } catch (const std::exception&) {
    throw UsageError("--scenario must be 1, 2, 3, 4 or ihs");
  }
  spec.N = o.n > 0 ? o.n : 100;
  spec.T = o.horizon > 0 ? o.horizon : 100;
  spec.t_star = o.tstar > 0 ? o.tstar : spec.T / 2;
  spec.signal = o.signal;
  spec.smooth_width = o.smooth_width;
  spec.noise_sd = o.noise_sd;
  if (o.action_prob >= 0.0) spec.action_prob = o.action_prob;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return spec;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_table(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing input " + path);
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty())
      t.header = split_csv_line(line);
    else
      t.rows.push_back(split_csv_line(line));
  }
  if (t.header.empty()) throw IoError(path + ": no header");
  return t;
}

double to_double(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": malformed number '" + s + "'");
  }
}

}  // namespace

int cmd_simulate(const Options& o, const ConfigText& config) {
  Dataset ds;
  json spec_json;
  if (o.scenario == "ihs") {
    IhsSpec spec;
    spec.N = o.n > 0 ? o.n : 100;
    spec.T = o.horizon > 0 ? o.horizon : 50;
    spec.t_star = o.tstar > 0 ? o.tstar : spec.T / 2;
    if (o.action_prob >= 0.0) spec.action_prob = o.action_prob;
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    ds = gen_ihs(spec, o.seed);
    spec_json = spec.to_json();
  } else {
    const ScenarioSpec spec = scenario_spec(o);
    ds = gen_scenario(spec, o.seed);
    spec_json = spec.to_json();
  }
  const fs::path dir = output_dir(o);
  write_csv(ds, dir / "data.csv");
  embed_config(dir / "data.csv", config);
  json payload;
  payload["seed"] = o.seed;
  payload["spec"] = spec_json;
  payload["dims"] = {ds.num_trajectories(), ds.horizon() + 1, ds.state_dim()};
  payload["num_actions"] = ds.num_actions();
  write_sidecars(dir, "simulate", config, payload);
  std::cout << "wrote " << (dir / "data.csv").string() << " (N=" << ds.num_trajectories()
            << ", T=" << ds.horizon() << ", d=" << ds.state_dim() << ")\n";
  return 0;
}

int cmd_test(const Options& o, const ConfigText& config) {
  const TestConfig tc = test_config(o);
  const Dataset ds = load_data(o);
  const int T = window_end(o, ds);
  const fs::path dir = output_dir(o);
  const AggregatedTest result = run_test(ds, o.t0, T, tc, o.seed);

  json payload;
  payload["seed"] = o.seed;
  payload["alpha"] = o.alpha;
  payload["result"] = result.to_json();
  json decisions = json::object();
  for (std::size_t k = 0; k < tc.kinds.size(); ++k) {
    const double p = result.p_values[k];
    const bool rejected = p <= o.alpha;
    decisions[to_string(tc.kinds[k])] = {{"p_value", p}, {"rejected", rejected}};
    std::cout << to_string(tc.kinds[k]) << ": p=" << fmt(p) << " rejected=" << (rejected ? "true" : "false")
              << "\n";
  }
  payload["decisions"] = decisions;
  write_sidecars(dir, "test", config, payload);
  return 0;
}

int cmd_detect(const Options& o, const ConfigText& config) {
  const TestConfig tc = test_config(o);
  const Dataset ds = load_data(o);
  const int T = window_end(o, ds);
  DetectConfig dc;
  try {
    dc.kappas = kappa_grid(o.kappa_min, o.kappa_max, o.kappa_step);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--kappa-min/--kappa-max/--kappa-step: ") + e.what());
  }
  if (dc.kappas.back() > T - o.t0)
    throw UsageError("--kappa-max exceeds the data span " + std::to_string(T - o.t0));
  dc.alpha = o.alpha;
  dc.kind = tc.kinds.front();
  dc.early_exit = !o.full_scan;
  dc.test = tc;
  const fs::path dir = output_dir(o);
  const ChangePointResult r = detect_change_point(ds, o.t0, T, dc, o.seed);
  write_detect_csv(dir / "detect.csv", r);
  embed_config(dir / "detect.csv", config);
  json payload;
  payload["seed"] = o.seed;
  payload["statistic"] = to_string(dc.kind);
  payload["result"] = r.to_json();
  json seeds = json::array();
  for (std::size_t k = 0; k < r.p_values.size(); ++k)
    seeds.push_back({{"kappa", r.kappas[k]}, {"seed", kappa_seed(o.seed, r.kappas[k])}});
  payload["window_seeds"] = seeds;
  write_sidecars(dir, "detect", config, payload);
  std::cout << "t_hat=" << r.t_hat;
  if (r.j0 >= 0) std::cout << " first_rejection_kappa=" << r.kappas[r.j0];
  std::cout << "\n";
  return 0;
}

int cmd_online(const Options& o, const ConfigText& config) {
  const ScenarioSpec spec = scenario_spec(o);
  OnlineConfig cfg;
  cfg.batch_len = o.batch_len;
  cfg.n_batches = o.batches;
  cfg.t_end = spec.T + o.batch_len * o.batches;
  cfg.explore_eps = o.explore_eps;
  cfg.methods.clear();
  for (const auto& m : split_list(o.methods)) {
    try {
      cfg.methods.push_back(MethodSpec::parse(m));
    } catch (const std::exception& e) {
      throw UsageError(std::string("--methods: ") + e.what());
    }
  }
  cfg.fqi.discount = o.gamma;
  cfg.linear_policy = o.linear_policy;
  cfg.detect.test = test_config(o);
  cfg.detect.alpha = o.alpha;
  cfg.detect.kind = cfg.detect.test.kinds.front();
  cfg.kappa_min = o.kappa_min;
  cfg.kappa_step = o.kappa_step;
  try {
    cfg.detect.kappas = kappa_grid(o.kappa_min, std::min(o.kappa_max, spec.T), o.kappa_step);
    cfg.validate(spec.T);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(o.change_rate >= 0.0)) throw UsageError("--change-rate must be nonnegative");
  if (o.replications < 1 || o.first_rep < 0) throw UsageError("--replications must be positive");

  const fs::path dir = output_dir(o);
  const fs::path csv = dir / "online.csv";
  json reps = json::array();
  std::map<std::string, double> sums;
  std::vector<std::string> order;
  for (int k = 0; k < o.replications; ++k) {
    const int rep = o.first_rep + k;
    const std::uint64_t problem_seed =
        derive_seed(o.seed, {stream::kReplication, static_cast<std::uint64_t>(rep)});
    const std::uint64_t run_seed =
        derive_seed(o.seed, {stream::kReplication, static_cast<std::uint64_t>(rep), 1});
    const OnlineProblem problem = make_online_problem(spec, o.change_rate, cfg.t_end, problem_seed);
    const auto traces = run_online(problem, cfg, run_seed);
    write_online_csv(csv, rep, traces, k > 0);
    json r;
    r["rep"] = rep;
    r["problem_seed"] = problem_seed;
    r["run_seed"] = run_seed;
    r["schedule"] = problem.schedule;
    json values = json::object();
    for (const auto& t : traces) {
      const ValueSummary v = evaluate_value(t, o.gamma);
      values[t.method] = {{"value", v.mean}, {"discounted", v.discounted}, {"t_star", t.t_star}};
      if (!sums.count(t.method)) order.push_back(t.method);
      sums[t.method] += v.mean;
      std::cout << "rep " << rep << " " << t.method << " value=" << fmt(v.mean) << "\n";
    }
    r["values"] = values;
    reps.push_back(r);
  }
  embed_config(csv, config);
  json payload;
  payload["seed"] = o.seed;
  payload["spec"] = spec.to_json();
  payload["change_rate"] = o.change_rate;
  payload["replications"] = reps;
  json means = json::object();
  for (const auto& m : order) means[m] = sums[m] / o.replications;
  payload["mean_value"] = means;
  write_sidecars(dir, "online", config, payload);
  return 0;
}

int cmd_report(const Options& o, const ConfigText& config) {
  if (o.inputs.empty()) throw UsageError("--inputs is required");
  std::vector<CsvTable> tables;
  for (const auto& path : o.inputs) tables.push_back(read_table(path));
  const auto& head = tables.front().header;
  const bool online = head == std::vector<std::string>{"rep", "method", "value", "t_star_trace"};
  const bool detect = head == std::vector<std::string>{"kappa", "p_value", "rejected"};
  if (!online && !detect) throw IoError(o.inputs.front() + ": unrecognized replication CSV");
  for (std::size_t f = 1; f < tables.size(); ++f)
    if (tables[f].header != head) throw IoError(o.inputs[f] + ": header differs from the first input");

  std::ostringstream csv;
  json payload;
  payload["inputs"] = o.inputs;
  if (online) {
    std::vector<std::string> methods;
    std::vector<std::map<std::string, std::pair<double, int>>> per_file(tables.size());
    for (std::size_t f = 0; f < tables.size(); ++f)
      for (const auto& row : tables[f].rows) {
        if (row.size() < 3) throw IoError(o.inputs[f] + ": short row");
        if (std::find(methods.begin(), methods.end(), row[1]) == methods.end()) methods.push_back(row[1]);
        auto& cell = per_file[f][row[1]];
        cell.first += to_double(row[2], o.inputs[f]);
        cell.second += 1;
      }
    const bool has_proposed = std::find(methods.begin(), methods.end(), "proposed") != methods.end();
    std::vector<std::string> columns = methods;
    if (has_proposed)
      for (const auto& m : methods)
        if (m != "proposed") columns.push_back("proposed-" + m);
    csv << "file";
    for (const auto& c : columns) csv << ',' << c;
    csv << '\n';
    std::vector<double> col_sum(columns.size(), 0.0);
    std::vector<int> col_n(columns.size(), 0);
    json rows = json::array();
    for (std::size_t f = 0; f < tables.size(); ++f) {
      std::map<std::string, double> mean;
      for (const auto& [m, cell] : per_file[f]) mean[m] = cell.first / cell.second;
      csv << o.inputs[f];
      json row{{"file", o.inputs[f]}};
      for (std::size_t c = 0; c < columns.size(); ++c) {
        double v = 0.0;
        bool present = false;
        if (c < methods.size()) {
          present = mean.count(methods[c]) > 0;
          if (present) v = mean[methods[c]];
        } else {
          const std::string other = columns[c].substr(9);
          present = mean.count("proposed") > 0 && mean.count(other) > 0;
          if (present) v = mean["proposed"] - mean[other];
        }
        csv << ',';
        if (present) {
          csv << fmt(v);
          row[columns[c]] = v;
          col_sum[c] += v;
          col_n[c] += 1;
        }
      }
      csv << '\n';
      rows.push_back(row);
    }
    csv << "mean";
    json means = json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      csv << ',';
      if (col_n[c] > 0) {
        csv << fmt(col_sum[c] / col_n[c]);
        means[columns[c]] = col_sum[c] / col_n[c];
      }
    }
    csv << '\n';
    payload["kind"] = "online";
    payload["rows"] = rows;
    payload["mean"] = means;
  } else {
    std::vector<int> kappas;
    std::vector<std::map<int, int>> rejected(tables.size());
    for (std::size_t f = 0; f < tables.size(); ++f)
      for (const auto& row : tables[f].rows) {
        if (row.size() < 3) throw IoError(o.inputs[f] + ": short row");
        const int kappa = static_cast<int>(to_double(row[0], o.inputs[f]));
        if (std::find(kappas.begin(), kappas.end(), kappa) == kappas.end()) kappas.push_back(kappa);
        rejected[f][kappa] = to_double(row[2], o.inputs[f]) != 0.0 ? 1 : 0;
      }
    std::sort(kappas.begin(), kappas.end());
    csv << "file";
    for (int k : kappas) csv << ",kappa_" << k;
    csv << '\n';
    json rows = json::array();
    for (std::size_t f = 0; f < tables.size(); ++f) {
      csv << o.inputs[f];
      json row{{"file", o.inputs[f]}};
      for (int k : kappas) {
        csv << ',';
        auto it = rejected[f].find(k);
        if (it != rejected[f].end()) {
          csv << it->second;
          row["kappa_" + std::to_string(k)] = it->second;
        }
      }
      csv << '\n';
      rows.push_back(row);
    }
    csv << "rejection_rate";
    json rates = json::object();
    for (int k : kappas) {
      int hits = 0, tested = 0;
      for (const auto& m : rejected) {
        auto it = m.find(k);
        if (it == m.end()) continue;
        ++tested;
        hits += it->second;
      }
      csv << ',' << fmt(static_cast<double>(hits) / tested);
      rates["kappa_" + std::to_string(k)] = static_cast<double>(hits) / tested;
    }
    csv << '\n';
    payload["kind"] = "detect";
    payload["rows"] = rows;
    payload["rejection_rate"] = rates;
  }
  const fs::path dir = output_dir(o);
  write_text(dir / "report.csv", comment_block(config) + csv.str());
  write_sidecars(dir, "report", config, payload);
  std::cout << csv.str();
  return 0;
}

namespace {

/// Keeps the common keys and those of the selected subcommand.
ConfigText resolved_config(const std::string& text, const std::string& command,
                           const std::vector<std::string>& commands) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      std::string key = line.substr(0, eq);
      key.erase(key.find_last_not_of(" \t") + 1);
      if (key == "workers" || key == "out" || key == "config") continue;
      const auto dot = key.find('.');
      if (dot != std::string::npos) {
        const std::string owner = key.substr(0, dot);
        if (owner != command &&
            std::find(commands.begin(), commands.end(), owner) != commands.end())
          continue;
      }
    }
    out += line + "\n";
  }
  return out;
}

void add_test_options(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Dataset CSV");
  sub->add_option("--t0", o.t0, "Start of the tested interval");
  sub->add_option("--T", o.window_end, "End of the tested interval (0 = data horizon)");
  sub->add_option("--num-actions", o.num_actions, "Number of actions (0 = infer)");
  sub->add_option("--features", o.features, "Features per action (0 = cross-validate)");
  sub->add_option("--cv-candidates", o.cv_candidates, "Candidate feature counts (comma list)");
  sub->add_option("--cv-folds", o.cv_folds, "Cross-validation folds");
  sub->add_option("--stride", o.stride, "Candidate split stride (0 = automatic)");
  sub->add_flag("--no-standardize", o.no_standardize, "Skip state standardization");
}

void add_generator_options(CLI::App* sub, Options& o) {
  sub->add_option("--scenario", o.scenario, "1, 2, 3, 4 or ihs");
  sub->add_option("--n", o.n, "Number of trajectories (0 = default)");
  sub->add_option("--horizon", o.horizon, "Horizon T (0 = default)");
  sub->add_option("--tstar", o.tstar, "Change point (0 = T/2)");
  sub->add_option("--signal", o.signal, "Reward signal strength");
  sub->add_option("--smooth-width", o.smooth_width, "Smooth-change width as a fraction of T");
  sub->add_option("--noise-sd", o.noise_sd, "Transition noise SD");
  sub->add_option("--action-prob", o.action_prob, "Behavior probability of action 1 (<0 = default)");
}

}  // namespace

int run(int argc, char** argv) {
  Options o;
  CLI::App app{"Stationarity tests and change-point detection for offline Q-functions"};
  app.set_config("--config", "", "INI config file; flags override");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.fallthrough();
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--gamma", o.gamma, "Discount factor");
  app.add_option("--alpha", o.alpha, "Significance level");
  app.add_option("--epsilon-boundary", o.epsilon, "Boundary removal fraction");
  app.add_option("--stat", o.stats, "integral, max or norm (comma list allowed)");
  app.add_option("--bootstrap-b", o.bootstrap_b, "Bootstrap draws");
  app.add_option("--reps", o.reps, "Basis repetitions aggregated per test");
  app.add_option("--tau", o.tau, "Quantile level for p-value aggregation");

  auto* simulate = app.add_subcommand("simulate", "Generate an offline dataset");
  add_generator_options(simulate, o);

  auto* test = app.add_subcommand("test", "Test stationarity over [t0, T]");
  add_test_options(test, o);

  auto* detect = app.add_subcommand("detect", "Detect the most recent change point");
  add_test_options(detect, o);
  detect->add_option("--kappa-min", o.kappa_min, "Smallest window length");
  detect->add_option("--kappa-max", o.kappa_max, "Largest window length");
  detect->add_option("--kappa-step", o.kappa_step, "Window length step");
  detect->add_flag("--full-scan", o.full_scan, "Test every kappa instead of stopping at the first rejection");

  auto* online = app.add_subcommand("online", "Online policy learning with periodic re-detection");
  add_generator_options(online, o);
  online->add_option("--cv-candidates", o.cv_candidates, "Candidate feature counts (comma list)");
  online->add_option("--features", o.features, "Features per action (0 = cross-validate)");
  online->add_option("--methods", o.methods, "Comma list of proposed, overall, random, oracle, kernel(h)");
  online->add_option("--batch-len", o.batch_len, "Decision points per batch");
  online->add_option("--batches", o.batches, "Number of batches");
  online->add_option("--explore-eps", o.explore_eps, "Exploration probability");
  online->add_option("--change-rate", o.change_rate, "Poisson rate of future changes");
  online->add_option("--replications", o.replications, "Replications");
  online->add_option("--first-rep", o.first_rep, "Index of the first replication");
  online->add_option("--kappa-min", o.kappa_min, "Smallest window length");
  online->add_option("--kappa-max", o.kappa_max, "Largest window length of the initial scan");
  online->add_option("--kappa-step", o.kappa_step, "Window length step");
  online->add_flag("--linear-policy", o.linear_policy, "Linear sieve policies instead of trees");

  auto* report = app.add_subcommand("report", "Aggregate replication CSVs into tables");
  report->add_option("--inputs", o.inputs, "Replication CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string command;
  std::vector<std::string> commands;
  for (const auto* sub : app.get_subcommands({})) {
    commands.push_back(sub->get_name());
    if (sub->parsed()) command = sub->get_name();
  }
  const ConfigText config = resolved_config(app.config_to_str(true, false), command, commands);
  try {
    if (*simulate) return cmd_simulate(o, config);
    if (*test) return cmd_test(o, config);
    if (*detect) return cmd_detect(o, config);
    if (*online) return cmd_online(o, config);
    if (*report) return cmd_report(o, config);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "input error: line " << e.line() << ": " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace cusumrl::cli
