#include "cusumrl/detect.hpp"

#include <fstream>
#include <stdexcept>

#include "cusumrl/random.hpp"

namespace cusumrl {

nlohmann::json ChangePointResult::to_json() const {
  nlohmann::json j;
  j["interval"] = {t0, T};
  j["alpha"] = alpha;
  j["kappas"] = kappas;
  j["p_values"] = p_values;
  j["t_hat"] = t_hat;
  if (j0 >= 0)
    j["first_rejection_kappa"] = kappas[j0];
  else
    j["first_rejection_kappa"] = nullptr;
  j["no_stationary_prefix"] = no_stationary_prefix;
  return j;
}

std::vector<int> kappa_grid(int lo, int hi, int step) {
  if (lo < 1 || step < 1 || hi < lo) throw std::invalid_argument("kappa grid: need 1 <= lo <= hi, step >= 1");
  std::vector<int> out;
  for (int k = lo; k <= hi; k += step) out.push_back(k);
  return out;
}

namespace {

void check_kappas(int t0, int T, std::span<const int> kappas) {
  if (kappas.empty()) throw std::invalid_argument("kappa grid is empty");
  for (std::size_t k = 0; k < kappas.size(); ++k) {
    if (kappas[k] < 1) throw std::invalid_argument("kappa values must be positive");
    if (k > 0 && kappas[k] <= kappas[k - 1])
      throw std::invalid_argument("kappa values must be strictly increasing");
  }
  if (kappas.back() > T - t0)
    throw std::out_of_range("kappa " + std::to_string(kappas.back()) + " exceeds the data span " +
                            std::to_string(T - t0));
}

}  // namespace

ChangePointResult decide_change_point(int t0, int T, std::span<const int> kappas,
                                      std::span<const double> p_values, double alpha) {
  check_kappas(t0, T, kappas);
  if (p_values.size() > kappas.size()) throw std::invalid_argument("more p-values than kappas");
  ChangePointResult r;
  r.t0 = t0;
  r.T = T;
  r.kappas.assign(kappas.begin(), kappas.end());
  r.alpha = alpha;
  r.t_hat = t0;
  for (std::size_t k = 0; k < p_values.size(); ++k) {
    if (p_values[k] < alpha) {
      r.j0 = static_cast<int>(k);
      if (k == 0) {
        r.t_hat = T - kappas[0];
        r.no_stationary_prefix = true;
      } else {
        r.t_hat = T - kappas[k - 1];
      }
      r.p_values.assign(p_values.begin(), p_values.begin() + static_cast<std::ptrdiff_t>(k) + 1);
      return r;
    }
  }
  r.p_values.assign(p_values.begin(), p_values.end());
  return r;
}

std::uint64_t kappa_seed(std::uint64_t master_seed, int kappa) {
  return derive_seed(master_seed, {stream::kKappa, static_cast<std::uint64_t>(kappa)});
}

ChangePointResult scan_change_points(int t0, int T, std::span<const int> kappas, double alpha,
                                     bool early_exit, const WindowTest& test,
                                     std::uint64_t master_seed) {
  check_kappas(t0, T, kappas);
  std::vector<double> p;
  for (int kappa : kappas) {
    p.push_back(test(T - kappa, T, kappa_seed(master_seed, kappa)));
    if (early_exit && p.back() < alpha) break;
  }
  ChangePointResult r = decide_change_point(t0, T, kappas, p, alpha);
  if (!early_exit) r.p_values = p;
  return r;
}

ChangePointResult detect_change_point(const Dataset& ds, int t0, int T, const DetectConfig& cfg,
                                      std::uint64_t master_seed) {
  TestConfig tc = cfg.test;
  tc.kinds = {cfg.kind};
  const WindowTest test = [&](int start, int end, std::uint64_t seed) {
    return run_test(ds, start, end, tc, seed).p_values[0];
  };
  return scan_change_points(t0, T, cfg.kappas, cfg.alpha, cfg.early_exit, test, master_seed);
}

void write_detect_csv(const std::filesystem::path& path, const ChangePointResult& result) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.precision(17);
  f << "kappa,p_value,rejected\n";
  for (std::size_t k = 0; k < result.p_values.size(); ++k)
    f << result.kappas[k] << ',' << result.p_values[k] << ',' << (result.rejected(k) ? 1 : 0)
      << '\n';
}

}  // namespace cusumrl
