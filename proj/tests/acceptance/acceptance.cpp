// End-to-end acceptance checks. One PASS/FAIL line per criterion; exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "fqesel/fqesel.hpp"
#include "support/oracles.hpp"

using namespace fqesel;
using nlohmann::json;

namespace {

struct Problem {
  TabularMdp mdp;
  Policy pi;
  HorizonSpec hz;
  std::vector<double> mu;
};

// |S| <= 6, |A| <= 3, H <= 5
Problem random_problem(CounterRng& rng, int h) {
  const std::size_t ns = 2 + rng.below(5), na = 1 + rng.below(3);
  auto mdp = random_dense_mdp(ns, na, rng);
  auto pi = random_policy(ns, na, rng);
  const auto hz = HorizonSpec::finite(h, rng.uniform(0.3, 1.0));
  auto mu = oracle::random_full_support(ns * na, rng);
  return {std::move(mdp), std::move(pi), hz, std::move(mu)};
}

int random_h(CounterRng& rng) { return 1 + static_cast<int>(rng.below(5)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void squared_loss_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = CounterRng::stream(101, "acc-sq");
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_problem(rng, random_h(rng));
    const std::size_t ns = p.mdp.n_states(), na = p.mdp.n_actions();
    const double c = time_constant(p.hz);
    const auto f = oracle::random_function(ns, na, rng, 0.0, c);
    const auto xf = oracle::random_function(ns, na, rng, 0.0, c);
    const auto bf = bellman_affine(p.mdp, p.pi, p.hz.gamma, f);
    SaFunction diff = xf;
    for (std::size_t u = 0; u < diff.size(); ++u) diff[u] -= bf[u];
    const double lhs = oracle::expected_squared_loss(p.mdp, p.pi, p.hz.gamma, xf, f, p.mu) -
                       oracle::expected_squared_loss(p.mdp, p.pi, p.hz.gamma, bf, f, p.mu);
    const double rhs = l2_norm(diff, p.mu) * l2_norm(diff, p.mu);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  const double secs = seconds_since(t0);
  report(1, "squared-loss representation", worst <= 1e-9 && secs < 10.0,
         fmt("max |diff| = %.3g", worst) + fmt(", %.2f s", secs));
}

void dual_norm_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = CounterRng::stream(102, "acc-dual");
  auto specs = exponential_kernel_grid();
  specs.push_back(KernelSpec::gaussian(1.0));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t ns = 2 + rng.below(5), na = 1 + rng.below(3);
    const auto mu = oracle::random_full_support(ns * na, rng);
    const Kernel k(specs[rng.below(specs.size())], FeatureMap::random_projection(ns, na, 3, t));
    const auto g = oracle::random_function(ns, na, rng, -1.0, 1.0);
    worst = std::max(worst, std::abs(dual_norm_exact(k, g, mu) - dual_norm_by_maximizer(k, g, mu)));
  }
  const double secs = seconds_since(t0);
  report(2, "dual norm kernel representation", worst <= 1e-9 && secs < 10.0,
         fmt("max |diff| = %.3g", worst) + fmt(", %.2f s", secs));
}

void telescoping_identity() {
  auto rng = CounterRng::stream(103, "acc-tele");
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_problem(rng, random_h(rng));
    const std::size_t ns = p.mdp.n_states(), na = p.mdp.n_actions();
    const auto b = make_exact_operator(p.mdp, p.pi, p.hz);
    const auto d = sample_dataset(p.mdp, p.mu, 50, t);
    // alternate a perturbed exact operator with a fitted one
    const auto x = t % 2 == 0 ? make_perturbed(b, oracle::random_function(ns, na, rng, -0.5, 0.5), "p")
                              : fit_fqe_operator(d, p.pi, KnnSpec{3, FeatureMap::coords(ns, na)}, p.hz, "k");
    const auto seq = meta_fqe(x, p.hz, ns, na);
    const double direct = policy_value(p.mdp, p.pi, seq.terminal) -
                          oracle::value_by_paths(p.mdp, p.pi, p.hz.gamma, p.hz.finite_steps());
    worst = std::max(worst, std::abs(direct - telescoped_value_error(x, seq, p.mdp, p.pi, p.hz)));
  }
  report(3, "telescoped value-error identity", worst <= 1e-9, fmt("max |diff| = %.3g", worst));
}

void master_bound() {
  auto rng = CounterRng::stream(104, "acc-master");
  int violations = 0;
  double tightest = 1e300;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_problem(rng, random_h(rng));
    const std::size_t ns = p.mdp.n_states(), na = p.mdp.n_actions();
    const auto occ = occupancy_profile(p.mdp, p.pi, p.hz, p.mu);
    const auto b = make_exact_operator(p.mdp, p.pi, p.hz);
    const auto d = sample_dataset(p.mdp, p.mu, 60, t);
    const auto x = t % 2 == 0 ? make_perturbed(b, oracle::random_function(ns, na, rng, -0.5, 0.5), "p")
                              : fit_fqe_operator(d, p.pi, TabularMeanSpec{}, p.hz, "t");
    const auto seq = meta_fqe(x, p.hz, ns, na);
    const double err = std::abs(policy_value(p.mdp, p.pi, seq.terminal) -
                                oracle::value_by_paths(p.mdp, p.pi, p.hz.gamma, p.hz.finite_steps()));
    const double bound = master_bound_l2(x, seq, p.mdp, p.pi, p.hz, p.mu, occ);
    violations += err > bound + 1e-9;
    tightest = std::min(tightest, bound - err);
  }
  report(4, "master bound", violations == 0,
         std::to_string(violations) + " violations" + fmt(", min slack %.3g", tightest));
}

void v_statistic_concentration() {
  auto rng = CounterRng::stream(105, "acc-vstat");
  constexpr std::size_t n = 4096;
  int inside = 0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto p = random_problem(rng, random_h(rng));
    const std::size_t ns = p.mdp.n_states(), na = p.mdp.n_actions();
    const double c = time_constant(p.hz);
    const auto b = make_exact_operator(p.mdp, p.pi, p.hz);
    const auto x = make_perturbed(b, oracle::random_function(ns, na, rng, -0.5, 0.5), "p");
    const auto f = oracle::random_function(ns, na, rng, 0.0, c);
    const auto d = sample_dataset(p.mdp, p.mu, n, 1000 + t);
    const Kernel k(KernelSpec::gaussian(1.0), FeatureMap::coords(ns, na));
    const double kbl = kernel_bellman_loss(k, x, f, d, p.pi, {p.hz.gamma, NextAction::expected, 0});
    auto g = x.apply(f);
    const auto bf = bellman_affine(p.mdp, p.pi, p.hz.gamma, f);
    for (std::size_t u = 0; u < g.size(); ++u) g[u] -= bf[u];
    const double dev = std::abs(std::sqrt(kbl) - dual_norm_exact(k, g, p.mu));
    const double tol = c * std::pow(4.0 * std::max(1.0, std::log(40.0)) / static_cast<double>(n), 0.25);
    inside += dev <= tol;
    worst_ratio = std::max(worst_ratio, dev / tol);
  }
  report(5, "V-statistic concentration", inside >= 190,
         std::to_string(inside) + "/200 within tolerance" + fmt(", worst dev/tol %.3f", worst_ratio));
}

void fixed_point_guarantee() {
  auto rng = CounterRng::stream(106, "acc-fp");
  int violations = 0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t ns = 2 + rng.below(5), na = 1 + rng.below(3);
    const auto mdp = random_dense_mdp(ns, na, rng);
    const auto pi = random_policy(ns, na, rng);
    const auto hz = HorizonSpec::infinite(0.9);
    const double c = time_constant(hz);
    const auto x = make_exact_operator(mdp, pi, hz);
    for (int hs = 1; hs <= 64; ++hs) {
      const auto seq = meta_fqe_fp(x, ns, na, {hs, 1e-12});
      const double res = sup_distance(seq.terminal, bellman_affine(mdp, pi, hz.gamma, seq.terminal));
      violations += res > 2.0 * c / hs;
      worst_ratio = std::max(worst_ratio, res / (2.0 * c / hs));
    }
  }
  report(6, "fixed-point residual bound", violations == 0,
         std::to_string(violations) + " violations over 20 MDPs x 64 H*" + fmt(", worst residual/bound %.3f", worst_ratio));
}

struct SelectionCounts {
  int rm = 0, klm = 0, rm_fp = 0, klm_fp = 0;
};

// 5x2 garnet, uniform behavior and evaluation policy, exact operator against its +0.5 shift
SelectionCounts selection_counts(std::optional<FixedPointConfig> fp) {
  const auto mdp = build_environment(
      json::parse(R"({"kind": "garnet", "n_states": 5, "n_actions": 2, "branching": 3, "seed": 7})"));
  const auto pi = Policy::uniform(5, 2);
  const std::vector<double> mu(10, 0.1);
  const auto finite = HorizonSpec::finite(5, 0.9);
  const auto infinite = HorizonSpec::infinite(0.9);
  const auto ex_f = make_exact_operator(mdp, pi, finite, "exact");
  const auto ex_i = make_exact_operator(mdp, pi, infinite, "exact");
  const CandidateSet cs_f({make_constant_shift(ex_f, 0.5, "shifted"), ex_f});
  const CandidateSet cs_i({make_constant_shift(ex_i, 0.5, "shifted"), ex_i});
  SelectionCounts counts;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto d = sample_dataset(mdp, mu, 4096, dataset_seed(seed, 4096));
    const Kernel k(KernelSpec::gaussian(1.0), fit_feature_normalization(FeatureMap::coords(5, 2), d));
    if (!fp) {
      counts.rm += select_rm(cs_f, finite, d, pi).selected_id == "exact";
      counts.klm += select_klm(cs_f, k, finite, d, pi).selected_id == "exact";
    }
    counts.rm_fp += select_rm_fp(cs_i, infinite, d, pi, fp).selected_id == "exact";
    counts.klm_fp += select_klm_fp(cs_i, k, infinite, d, pi, fp).selected_id == "exact";
  }
  return counts;
}

void selection_consistency() {
  const auto c = selection_counts(std::nullopt);
  const int h_star = FixedPointConfig::for_sample_size(4096).h_star;
  const bool pass = c.rm >= 95 && c.klm >= 95 && c.rm_fp >= 95 && c.klm_fp >= 95;
  report(7, "selection consistency", pass,
         "exact selected: rm " + std::to_string(c.rm) + "/100, klm " + std::to_string(c.klm) + "/100, rm_fp " +
             std::to_string(c.rm_fp) + "/100, klm_fp " + std::to_string(c.klm_fp) + "/100 (H* = " +
             std::to_string(h_star) + ")");
  const auto long_run = selection_counts(FixedPointConfig{400, 1e-12});
  std::printf("INFO criterion 7 with H* = 400: rm_fp %d/100, klm_fp %d/100\n", long_run.rm_fp, long_run.klm_fp);
}

json shift_grid_manifest() {
  json c = json::array({{{"id", "exact"}, {"kind", "exact_tabular"}}});
  for (int i = -50; i <= 50; ++i) {
    if (i == 0) continue;
    c.push_back({{"id", "shift_" + std::to_string(i)}, {"kind", "constant_shift"}, {"base", "exact"}, {"shift", i * 0.001}});
  }
  return c;
}

void rate_slope() {
  const auto t0 = std::chrono::steady_clock::now();
  json j = {
      {"env", {{"kind", "garnet"}, {"n_states", 5}, {"n_actions", 2}, {"branching", 3}, {"seed", 11}}},
      {"eval_eps_grid", {1.0}},
      {"n_grid", {256, 1024, 4096, 16384}},
      {"horizons", json::array({{{"H", 2}, {"gamma", 1.0}}})},
      {"methods", {"rm"}},
      {"candidates", shift_grid_manifest()},
      {"workers", 4},
  };
  j["seeds"] = json::array();
  for (int s = 0; s < 20; ++s) j["seeds"].push_back(s);
  const auto checks = rate_check(run_experiment(config_from_json(j)));
  const auto& rc = checks.at(0);
  const double secs = seconds_since(t0);
  std::string medians;
  for (std::size_t i = 0; i < rc.n_values.size(); ++i)
    medians += " n=" + std::to_string(rc.n_values[i]) + ":" + fmt("%.4g", rc.medians[i]);
  report(8, "rate check", rc.slope && *rc.slope <= -0.15 && secs < 600.0,
         "slope " + rc.slope_label() + "," + medians + fmt(", %.1f s", secs));
}

json mismatch_config() {
  return json::parse(R"({
    "env": {"kind": "inventory", "capacity": 6, "n_actions": 3, "max_demand": 4, "reward_spread": 0.2},
    "behavior": "uniform",
    "eval_eps_grid": [0, 0.25, 0.5, 1],
    "n_grid": [480],
    "horizons": [{"H": 10, "gamma": 0.9}],
    "methods": [
      "rm",
      {"method": "klm", "kernels": ["exp:p=1:sigma=0.1", "exp:p=1:sigma=1", "exp:p=1:sigma=10",
                                    "exp:p=2:sigma=0.1", "exp:p=2:sigma=1", "exp:p=2:sigma=10"]}
    ],
    "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    "workers": 4
  })");
}

void mismatch_analog() {
  const auto rows = run_experiment(config_from_json(mismatch_config()));
  std::map<std::string, std::vector<double>> at_zero;
  for (const auto& r : rows)
    if (r.ok() && r.eps_eval == 0.0) at_zero[r.kernel.empty() ? r.method : r.method + "[" + r.kernel + "]"].push_back(r.excess_mae);
  auto mean_se = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::make_pair(m, sd / std::sqrt(static_cast<double>(v.size())));
  };
  const auto [rm_mean, rm_se] = mean_se(at_zero.at("rm"));
  std::string worst;
  double worst_mean = -1.0, worst_se = 0.0;
  for (const auto& [label, v] : at_zero) {
    if (label == "rm") continue;
    const auto [m, se] = mean_se(v);
    if (m > worst_mean) std::tie(worst, worst_mean, worst_se) = std::tie(label, m, se);
  }
  const double pooled = std::sqrt(rm_se * rm_se + worst_se * worst_se);
  const double gap = worst_mean - rm_mean;
  report(9, "mismatch benchmark", rm_mean <= worst_mean && gap > pooled,
         fmt("rm %.4f", rm_mean) + ", worst " + worst + fmt(" %.4f", worst_mean) + fmt(", gap %.4f", gap) +
             fmt(" vs pooled se %.4f", pooled));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const auto base = std::filesystem::temp_directory_path() / "fqesel_acceptance_determinism";
  std::filesystem::remove_all(base);
  const auto cfg = config_from_json(mismatch_config());
  emit_results(run_experiment(cfg), base / "a", cfg.delta);
  emit_results(run_experiment(cfg), base / "b", cfg.delta);
  const auto a = slurp(base / "a" / "results.csv");
  const auto b = slurp(base / "b" / "results.csv");
  std::filesystem::remove_all(base);
  report(10, "determinism", !a.empty() && a == b, std::to_string(a.size()) + " bytes, identical: " + (a == b ? "yes" : "no"));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks{
      squared_loss_identity, dual_norm_identity, telescoping_identity, master_bound,   v_statistic_concentration,
      fixed_point_guarantee, selection_consistency, rate_slope,        mismatch_analog, determinism};
  for (std::size_t i = 0; i < checks.size(); ++i) {
    try {
      checks[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), "exception", false, e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
