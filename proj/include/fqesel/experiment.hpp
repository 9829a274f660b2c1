#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fqesel/dataset.hpp"
#include "fqesel/errors.hpp"
#include "fqesel/generators.hpp"
#include "fqesel/kernel.hpp"
#include "fqesel/manifest.hpp"
#include "fqesel/mdp.hpp"
#include "fqesel/mdp_io.hpp"
#include "fqesel/parallel.hpp"
#include "fqesel/selector.hpp"

namespace fqesel {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One scoring rule to run per grid point; kernel methods carry their kernel.
struct MethodEntry {
  Method method = Method::rm;
  std::optional<KernelSpec> kernel;

  std::string kernel_label() const { return kernel ? kernel->to_string() : std::string(); }
  friend bool operator==(const MethodEntry&, const MethodEntry&) = default;
};

struct ExperimentConfig {
  nlohmann::json env;
  std::optional<std::vector<double>> behavior_mu;  // empty means uniform over pairs
  std::vector<double> eval_eps_grid;
  std::vector<std::size_t> n_grid;
  std::vector<HorizonSpec> horizons;
  std::vector<MethodEntry> methods;
  CandidateManifest candidates = default_manifest();
  std::vector<std::uint64_t> seeds;
  double delta = 0.05;
  double train_fraction = 0.5;
  NextAction next_action = NextAction::expected;
  std::string kernel_features = "coords";
  std::optional<int> fp_h_star;
  std::size_t probe_count = 8;
  unsigned workers = 1;
  bool record_timing = false;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

inline nlohmann::json horizon_to_json(const HorizonSpec& h) {
  return {{"H", h.steps ? nlohmann::json(*h.steps) : nlohmann::json("inf")}, {"gamma", h.gamma}};
}

inline HorizonSpec horizon_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"H", "gamma"}, "horizons");
  const auto& hj = j.at("H");
  const double gamma = j.value("gamma", 1.0);
  try {
    if (hj.is_string()) {
      if (hj.get<std::string>() != "inf") throw ConfigError("horizons: H must be an integer or \"inf\"");
      return HorizonSpec::validated(HorizonSpec::infinite(gamma));
    }
    return HorizonSpec::validated(HorizonSpec::finite(hj.get<int>(), gamma));
  } catch (const InvalidHorizon& e) {
    throw ConfigError(std::string("horizons: ") + e.what());
  }
}

}  // namespace detail

/// Builds the environment described by a config "env" object.
inline TabularMdp build_environment(const nlohmann::json& env) {
  if (!env.is_object()) throw ConfigError("env must be an object");
  const auto kind = env.value("kind", std::string());
  try {
    if (kind == "garnet") {
      detail::reject_unknown_keys(env, {"kind", "n_states", "n_actions", "branching", "max_spread", "seed"}, "env");
      return garnet_mdp(env.at("n_states").get<std::size_t>(), env.at("n_actions").get<std::size_t>(),
                        env.at("branching").get<std::size_t>(), env.value("max_spread", 0.5),
                        CounterRng::stream(env.at("seed").get<std::uint64_t>(), "garnet"));
    }
    if (kind == "inventory") {
      detail::reject_unknown_keys(env, {"kind", "capacity", "n_actions", "max_demand", "reward_spread"}, "env");
      return inventory_mdp(env.at("capacity").get<std::size_t>(), env.at("n_actions").get<std::size_t>(),
                           env.at("max_demand").get<std::size_t>(), env.value("reward_spread", 0.2));
    }
    if (kind == "inline") {
      detail::reject_unknown_keys(env, {"kind", "mdp"}, "env");
      return mdp_from_json(env.at("mdp"));
    }
    if (kind == "file") {
      detail::reject_unknown_keys(env, {"kind", "path"}, "env");
      return load_mdp(env.at("path").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("env: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
  throw ConfigError("env: unknown kind '" + kind + "'");
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.eval_eps_grid.empty()) throw ConfigError("eval_eps_grid is empty");
  if (cfg.n_grid.empty()) throw ConfigError("n_grid is empty");
  if (cfg.horizons.empty()) throw ConfigError("horizons is empty");
  if (cfg.methods.empty()) throw ConfigError("methods is empty");
  if (cfg.seeds.empty()) throw ConfigError("seeds is empty");
  for (double e : cfg.eval_eps_grid)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eval_eps_grid values must lie in [0, 1]");
  for (auto n : cfg.n_grid)
    if (n < 4) throw ConfigError("n_grid values must be >= 4");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (cfg.fp_h_star && *cfg.fp_h_star < 1) throw ConfigError("fp_h_star must be >= 1");
  if (cfg.probe_count == 0) throw ConfigError("probe_count must be >= 1");
  for (const auto& m : cfg.methods)
    if (uses_kernel(m.method) != m.kernel.has_value())
      throw ConfigError("method " + to_string(m.method) + ": kernel list mismatch");
  detail::check_features_name(cfg.kernel_features);
  validate_manifest(cfg.candidates);
  const auto mdp = build_environment(cfg.env);
  if (cfg.behavior_mu && cfg.behavior_mu->size() != mdp.n_pairs())
    throw ConfigError("behavior: length must equal |S||A|");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be an object");
  detail::reject_unknown_keys(j,
                              {"env", "behavior", "eval_eps_grid", "n_grid", "horizons", "methods", "candidates",
                               "seeds", "delta", "train_fraction", "next_action", "kernel_features", "fp_h_star",
                               "probe_count", "workers", "record_timing"},
                              "config");
  ExperimentConfig cfg;
  try {
    cfg.env = j.at("env");
    if (j.contains("behavior")) {
      const auto& b = j.at("behavior");
      if (b.is_string()) {
        if (b.get<std::string>() != "uniform") throw ConfigError("behavior must be \"uniform\" or a list");
      } else {
        cfg.behavior_mu = b.get<std::vector<double>>();
      }
    }
    cfg.eval_eps_grid = j.at("eval_eps_grid").get<std::vector<double>>();
    cfg.n_grid = j.at("n_grid").get<std::vector<std::size_t>>();
    for (const auto& h : j.at("horizons")) cfg.horizons.push_back(detail::horizon_from_json(h));
    for (const auto& m : j.at("methods")) {
      if (m.is_string()) {
        cfg.methods.push_back({parse_method(m.get<std::string>()), std::nullopt});
        continue;
      }
      detail::reject_unknown_keys(m, {"method", "kernels"}, "methods");
      const Method method = parse_method(m.at("method").get<std::string>());
      if (uses_kernel(method)) {
        const auto kernels = m.at("kernels").get<std::vector<std::string>>();
        if (kernels.empty()) throw ConfigError("methods: kernel list is empty");
        for (const auto& k : kernels) cfg.methods.push_back({method, KernelSpec::parse(k)});
      } else {
        if (m.contains("kernels")) throw ConfigError("methods: " + to_string(method) + " takes no kernels");
        cfg.methods.push_back({method, std::nullopt});
      }
    }
    if (j.contains("candidates")) {
      const auto& c = j.at("candidates");
      cfg.candidates = c.is_string() ? load_manifest(c.get<std::string>()) : manifest_from_json(c);
    }
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.delta = j.value("delta", cfg.delta);
    cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
    const auto na = j.value("next_action", std::string("expected"));
    if (na == "expected") {
      cfg.next_action = NextAction::expected;
    } else if (na == "sampled") {
      cfg.next_action = NextAction::sampled;
    } else {
      throw ConfigError("next_action must be \"expected\" or \"sampled\"");
    }
    cfg.kernel_features = j.value("kernel_features", cfg.kernel_features);
    if (j.contains("fp_h_star") && !j.at("fp_h_star").is_null()) cfg.fp_h_star = j.at("fp_h_star").get<int>();
    cfg.probe_count = j.value("probe_count", cfg.probe_count);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.record_timing = j.value("record_timing", cfg.record_timing);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["env"] = cfg.env;
  j["behavior"] = cfg.behavior_mu ? nlohmann::json(*cfg.behavior_mu) : nlohmann::json("uniform");
  j["eval_eps_grid"] = cfg.eval_eps_grid;
  j["n_grid"] = cfg.n_grid;
  j["horizons"] = nlohmann::json::array();
  for (const auto& h : cfg.horizons) j["horizons"].push_back(detail::horizon_to_json(h));
  j["methods"] = nlohmann::json::array();
  for (const auto& m : cfg.methods) {
    if (m.kernel) {
      j["methods"].push_back({{"method", to_string(m.method)}, {"kernels", {m.kernel->to_string()}}});
    } else {
      j["methods"].push_back(to_string(m.method));
    }
  }
  j["candidates"] = manifest_to_json(cfg.candidates);
  j["seeds"] = cfg.seeds;
  j["delta"] = cfg.delta;
  j["train_fraction"] = cfg.train_fraction;
  j["next_action"] = cfg.next_action == NextAction::expected ? "expected" : "sampled";
  j["kernel_features"] = cfg.kernel_features;
  j["fp_h_star"] = cfg.fp_h_star ? nlohmann::json(*cfg.fp_h_star) : nlohmann::json(nullptr);
  j["probe_count"] = cfg.probe_count;
  j["workers"] = cfg.workers;
  j["record_timing"] = cfg.record_timing;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunResult {
  std::uint64_t seed = 0;
  std::string method;
  std::string kernel;
  std::size_t n = 0;
  std::optional<int> horizon;
  double gamma = 1.0;
  double eps_eval = 0.0;
  std::string selected_id;
  double delta_j = 0.0;
  double excess_mae = 0.0;
  double bound_value = 0.0;
  double wall_ms = 0.0;
  std::string status = "ok";
  std::vector<double> scores;

  bool ok() const { return status == "ok"; }
  friend bool operator==(const RunResult&, const RunResult&) = default;
};

namespace detail {

inline std::vector<double> resolve_mu(const ExperimentConfig& cfg, const TabularMdp& mdp) {
  if (!cfg.behavior_mu) return behavior_mu(Policy::uniform(mdp.n_states(), mdp.n_actions()));
  if (cfg.behavior_mu->size() != mdp.n_pairs()) throw ConfigError("behavior: length must equal |S||A|");
  try {
    check_distribution(*cfg.behavior_mu, "behavior");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return *cfg.behavior_mu;
}

inline std::string failure_status(const std::string& kind, const std::string& what) {
  std::string s = "failed:" + kind + ":" + what;
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace detail

/// Seed of the dataset drawn for (seed, n); shared across horizons, evaluation
/// policies and methods so that they are compared on the same samples.
inline std::uint64_t dataset_seed(std::uint64_t seed, std::size_t n) {
  return CounterRng::stream(seed, "dataset").split(n).next_u64();
}

/// Executes the full grid seeds x n_grid x horizons x eval_eps_grid x methods.
/// Rows come back in that nested order; failures are kept as rows with a
/// "failed:" status.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const TabularMdp mdp = build_environment(cfg.env);
  const auto mu = detail::resolve_mu(cfg, mdp);
  const std::string mu_desc = cfg.behavior_mu ? "explicit" : "uniform";
  const Policy uniform = Policy::uniform(mdp.n_states(), mdp.n_actions());
  std::vector<Policy> experts;
  for (const auto& h : cfg.horizons) experts.push_back(greedy_expert(mdp, h));

  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_eps = cfg.eval_eps_grid.size();
  const std::size_t n_hor = cfg.horizons.size();
  const std::size_t n_n = cfg.n_grid.size();
  const std::size_t points = cfg.seeds.size() * n_n * n_hor * n_eps;
  std::vector<RunResult> rows(points * n_methods);

  parallel_for(points, cfg.workers, [&](std::size_t p) {
    const std::size_t ie = p % n_eps;
    const std::size_t ih = (p / n_eps) % n_hor;
    const std::size_t in = (p / (n_eps * n_hor)) % n_n;
    const std::size_t is = p / (n_eps * n_hor * n_n);
    const HorizonSpec& horizon = cfg.horizons[ih];
    const std::size_t n = cfg.n_grid[in];
    const double eps = cfg.eval_eps_grid[ie];

    for (std::size_t m = 0; m < n_methods; ++m) {
      auto& r = rows[p * n_methods + m];
      r.seed = cfg.seeds[is];
      r.method = to_string(cfg.methods[m].method);
      r.kernel = cfg.methods[m].kernel_label();
      r.n = n;
      r.horizon = horizon.steps;
      r.gamma = horizon.gamma;
      r.eps_eval = eps;
    }
    auto fail_all = [&](const std::string& status) {
      for (std::size_t m = 0; m < n_methods; ++m) {
        auto& r = rows[p * n_methods + m];
        r.status = status;
        r.delta_j = r.excess_mae = r.bound_value = std::numeric_limits<double>::quiet_NaN();
      }
    };

    std::optional<Policy> policy;
    std::optional<TransitionDataset> train, valid;
    std::optional<CandidateSet> cset;
    try {
      policy = mix_policies(uniform, experts[ih], eps);
      const auto dseed = dataset_seed(cfg.seeds[is], n);
      const auto data = sample_dataset(mdp, mu, n, dseed, mu_desc);
      auto parts = split_dataset(data, cfg.train_fraction, dseed);
      train = std::move(parts.first);
      valid = std::move(parts.second);
      cset = instantiate_candidates(cfg.candidates, {*train, *policy, horizon, &mdp, cfg.next_action, 1});
    } catch (const AssumptionViolation& e) {
      fail_all(detail::failure_status("assumption", e.what()));
      return;
    } catch (const Error& e) {
      fail_all(detail::failure_status("setup", e.what()));
      return;
    }

    SelectionSession session(*cset, *valid, *policy, horizon, cfg.next_action);
    const GroundTruth truth{mdp, *policy, horizon, mu, cfg.probe_count, 0};
    for (std::size_t m = 0; m < n_methods; ++m) {
      auto& r = rows[p * n_methods + m];
      const auto& entry = cfg.methods[m];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        if (uses_fixed_point(entry.method) == horizon.is_finite())
          throw InvalidHorizon(to_string(entry.method) +
                               (horizon.is_finite() ? " needs an infinite horizon" : " needs a finite horizon"));
        std::optional<Kernel> kernel;
        if (entry.kernel)
          kernel.emplace(*entry.kernel,
                         fit_feature_normalization(
                             feature_map_from_name(cfg.kernel_features, mdp.n_states(), mdp.n_actions()), *train));
        std::optional<FixedPointConfig> fp;
        if (cfg.fp_h_star) fp = FixedPointConfig{*cfg.fp_h_star, 1e-12};
        auto rep = session.select(entry.method, kernel ? &*kernel : nullptr, fp);
        attach_oracle(rep, *cset, truth, kernel ? &*kernel : nullptr);
        r.selected_id = rep.selected_id;
        r.scores = rep.scores;
        r.delta_j = rep.oracle->delta_j;
        r.excess_mae = rep.oracle->excess_mae;
        r.bound_value = rep.oracle->bound_value;
      } catch (const AssumptionViolation& e) {
        r.status = detail::failure_status("assumption", e.what());
      } catch (const InvalidHorizon& e) {
        r.status = detail::failure_status("horizon", e.what());
      } catch (const Error& e) {
        r.status = detail::failure_status("error", e.what());
      }
      if (!r.ok()) r.delta_j = r.excess_mae = r.bound_value = std::numeric_limits<double>::quiet_NaN();
      if (cfg.record_timing)
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  return rows;
}

/// True when every row failed on the sufficient-exploration assumption.
inline bool all_rows_assumption_failures(const std::vector<RunResult>& rows) {
  return !rows.empty() &&
         std::all_of(rows.begin(), rows.end(), [](const RunResult& r) { return r.status.starts_with("failed:assumption"); });
}

// ---------------------------------------------------------------------------
// Rate check
// ---------------------------------------------------------------------------

inline constexpr double kRateFloor = 1e-6;

/// Least-squares slope of y against x.
inline double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("least_squares_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw InvalidArgument("least_squares_slope: x values are all equal");
  return sxy / sxx;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct RateCheck {
  std::string method;
  std::string kernel;
  std::vector<std::size_t> n_values;
  std::vector<double> medians;
  std::optional<double> slope;  // empty when every median is zero ("floor")

  std::string slope_label() const;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string RateCheck::slope_label() const { return slope ? format_double(*slope) : "floor"; }

/// Slope of log(median excess MAE + 1e-6) against log n for one series.
inline RateCheck fit_rate(std::string method, std::string kernel, std::map<std::size_t, std::vector<double>> by_n) {
  RateCheck rc{std::move(method), std::move(kernel), {}, {}, std::nullopt};
  if (by_n.size() < 3) throw InvalidArgument("rate_check: need at least 3 distinct n values");
  std::vector<double> lx, ly;
  bool degenerate = true;
  for (auto& [n, vals] : by_n) {
    if (vals.size() < 10) throw InvalidArgument("rate_check: need at least 10 seeds per n");
    const double med = median(vals);
    rc.n_values.push_back(n);
    rc.medians.push_back(med);
    if (med != 0.0) degenerate = false;
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(med + kRateFloor));
  }
  if (!degenerate) rc.slope = least_squares_slope(lx, ly);
  return rc;
}

/// One fitted slope per (method, kernel) series, using successful rows only.
inline std::vector<RateCheck> rate_check(const std::vector<RunResult>& rows) {
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::vector<double>>> series;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.kernel);
    if (!series.contains(key)) order.push_back(key);
    if (r.ok()) series[key][r.n].push_back(r.excess_mae);
    else series[key];
  }
  std::vector<RateCheck> out;
  for (const auto& key : order) out.push_back(fit_rate(key.first, key.second, series[key]));
  return out;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols{"seed",        "method",     "kernel",    "n",
                                             "H",           "gamma",      "eps_eval",  "selected_id",
                                             "delta_j",     "excess_mae", "bound_value", "wall_ms",
                                             "status"};
  return cols;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw IoError("results.csv: bad number '" + s + "'");
  return v;
}

template <class Int>
Int parse_int(const std::string& s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw IoError("results.csv: bad integer '" + s + "'");
  return v;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string series_label(const RunResult& r) { return r.kernel.empty() ? r.method : r.method + "[" + r.kernel + "]"; }

inline std::string series_file_name(std::string label) {
  for (char& c : label)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-') c = '_';
  return label;
}

struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  m.count = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

}  // namespace detail

inline std::string results_to_csv(const std::vector<RunResult>& rows) {
  std::ostringstream out;
  const auto& cols = results_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.seed << ',' << detail::csv_field(r.method) << ',' << detail::csv_field(r.kernel) << ',' << r.n << ','
        << (r.horizon ? std::to_string(*r.horizon) : std::string("inf")) << ',' << format_double(r.gamma) << ','
        << format_double(r.eps_eval) << ',' << detail::csv_field(r.selected_id) << ',' << format_double(r.delta_j)
        << ',' << format_double(r.excess_mae) << ',' << format_double(r.bound_value) << ','
        << format_double(r.wall_ms) << ',' << detail::csv_field(r.status) << '\n';
  }
  return out.str();
}

/// Parses results.csv text. Scores are not part of the table and come back empty.
inline std::vector<RunResult> results_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("results.csv: missing header");
  if (detail::split_csv_line(line) != results_columns()) throw IoError("results.csv: unexpected header");
  std::vector<RunResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != results_columns().size()) throw IoError("results.csv: wrong field count");
    RunResult r;
    r.seed = detail::parse_int<std::uint64_t>(f[0]);
    r.method = f[1];
    r.kernel = f[2];
    r.n = detail::parse_int<std::size_t>(f[3]);
    if (f[4] != "inf") r.horizon = detail::parse_int<int>(f[4]);
    r.gamma = detail::parse_double(f[5]);
    r.eps_eval = detail::parse_double(f[6]);
    r.selected_id = f[7];
    r.delta_j = detail::parse_double(f[8]);
    r.excess_mae = detail::parse_double(f[9]);
    r.bound_value = detail::parse_double(f[10]);
    r.wall_ms = detail::parse_double(f[11]);
    r.status = f[12];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Per-row candidate scores, one JSON array per line in row order.
inline std::string scores_to_jsonl(const std::vector<RunResult>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json a = nlohmann::json::array();
    for (double s : r.scores) a.push_back(format_double(s));
    out += a.dump() + "\n";
  }
  return out;
}

inline void attach_scores_jsonl(std::vector<RunResult>& rows, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  for (auto& r : rows) {
    if (!std::getline(in, line)) throw IoError("scores.jsonl: fewer lines than rows");
    r.scores.clear();
    for (const auto& s : nlohmann::json::parse(line)) r.scores.push_back(detail::parse_double(s.get<std::string>()));
  }
}

/// Aggregates per (method, kernel) and per (method, kernel, eps_eval).
inline nlohmann::json summarize(const std::vector<RunResult>& rows, double delta = 0.05) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunResult*>> by_series;
  for (const auto& r : rows) {
    const auto label = detail::series_label(r);
    if (!by_series.contains(label)) order.push_back(label);
    by_series[label].push_back(&r);
  }
  nlohmann::json series = nlohmann::json::array();
  for (const auto& label : order) {
    const auto& rs = by_series[label];
    std::vector<double> excess, abs_dj;
    std::size_t failed = 0;
    std::map<double, std::vector<double>> by_eps;
    std::map<std::string, std::size_t> picks;
    for (const auto* r : rs) {
      if (!r->ok()) {
        ++failed;
        continue;
      }
      excess.push_back(r->excess_mae);
      abs_dj.push_back(std::abs(r->delta_j));
      by_eps[r->eps_eval].push_back(r->excess_mae);
      ++picks[r->selected_id];
    }
    const auto m = detail::moments(excess);
    nlohmann::json per_eps = nlohmann::json::array();
    for (const auto& [eps, v] : by_eps) {
      const auto em = detail::moments(v);
      per_eps.push_back({{"eps_eval", eps},
                         {"count", em.count},
                         {"mean_excess_mae", em.mean},
                         {"sd_excess_mae", em.sd},
                         {"se_excess_mae", em.count > 0 ? em.sd / std::sqrt(static_cast<double>(em.count)) : 0.0}});
    }
    series.push_back({{"series", label},
                      {"method", rs.front()->method},
                      {"kernel", rs.front()->kernel},
                      {"rows", rs.size()},
                      {"failed", failed},
                      {"mean_excess_mae", m.mean},
                      {"sd_excess_mae", m.sd},
                      {"mean_abs_delta_j", detail::moments(abs_dj).mean},
                      {"selections", picks},
                      {"by_eps_eval", per_eps}});
  }
  return {{"rows", rows.size()}, {"delta", delta}, {"series", series}};
}

/// Writes results.csv, scores.jsonl, summary.json and plotdata/<series>.dat
/// (eps_eval, mean excess MAE, sd) into out_dir.
inline void emit_results(const std::vector<RunResult>& rows, const std::filesystem::path& out_dir, double delta = 0.05) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "plotdata", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "plotdata").string() + ": " + ec.message());
  detail::write_file(out_dir / "results.csv", results_to_csv(rows));
  detail::write_file(out_dir / "scores.jsonl", scores_to_jsonl(rows));
  const auto summary = summarize(rows, delta);
  detail::write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  for (const auto& s : summary.at("series")) {
    std::ostringstream dat;
    dat << "# eps_eval mean_excess_mae sd_excess_mae count\n";
    for (const auto& e : s.at("by_eps_eval"))
      dat << format_double(e.at("eps_eval").get<double>()) << ' '
          << format_double(e.at("mean_excess_mae").get<double>()) << ' '
          << format_double(e.at("sd_excess_mae").get<double>()) << ' ' << e.at("count").get<std::size_t>() << '\n';
    detail::write_file(out_dir / "plotdata" / (detail::series_file_name(s.at("series").get<std::string>()) + ".dat"),
                       dat.str());
  }
}

/// Reads results.csv and scores.jsonl back from an emitted directory.
inline std::vector<RunResult> read_results(const std::filesystem::path& dir) {
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto rows = results_from_csv(slurp(dir / "results.csv"));
  if (std::filesystem::exists(dir / "scores.jsonl")) attach_scores_jsonl(rows, slurp(dir / "scores.jsonl"));
  return rows;
}

}  // namespace fqesel
