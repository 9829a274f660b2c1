// Command-line front end: generate, select, sweep, rate-check, report.
//
// Exit codes: 0 success, 2 configuration error, 3 every row failed the
// sufficient-exploration assumption, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fqesel/fqesel.hpp"

using namespace fqesel;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAssumption = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

// Options shared by sweep and select that override config fields.
struct Overrides {
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> n_grid;
  std::vector<double> eps_grid;
  std::vector<std::string> horizons;
  std::vector<std::string> methods;
  std::string manifest;
  std::string kernel_features;
  std::optional<int> fp_h_star;
  std::optional<double> delta;
  std::optional<double> train_fraction;
  std::optional<unsigned> workers;
  std::string next_action;
  bool record_timing = false;

  void add_to(CLI::App& app) {
    app.add_option("--seeds", seeds, "Seed list");
    app.add_option("--n-grid", n_grid, "Dataset sizes");
    app.add_option("--eps-grid", eps_grid, "Evaluation-policy mixture weights on the uniform policy");
    app.add_option("--horizons", horizons, "Horizons as H:gamma, with H an integer or inf");
    app.add_option("--methods", methods, "Methods: rm, rm_fp, klm=<kernel>, klm_fp=<kernel>");
    app.add_option("--manifest", manifest, "Candidate manifest file");
    app.add_option("--kernel-features", kernel_features, "Feature map for kernels");
    app.add_option("--fp-h-star", fp_h_star, "Iterations H* for the fixed-point methods");
    app.add_option("--delta", delta, "Confidence parameter for bound annotations");
    app.add_option("--train-fraction", train_fraction, "Share of records used for fitting");
    app.add_option("--workers", workers, "Worker threads");
    app.add_option("--next-action", next_action, "expected or sampled");
    app.add_flag("--record-timing", record_timing, "Record wall-clock time per row");
  }

  void apply(json& j) const {
    if (!seeds.empty()) j["seeds"] = seeds;
    if (!n_grid.empty()) j["n_grid"] = n_grid;
    if (!eps_grid.empty()) j["eval_eps_grid"] = eps_grid;
    if (!horizons.empty()) {
      j["horizons"] = json::array();
      for (const auto& h : horizons) {
        const auto colon = h.find(':');
        if (colon == std::string::npos) throw ConfigError("--horizons: expected H:gamma, got '" + h + "'");
        const auto steps = h.substr(0, colon);
        double gamma = 0.0;
        try {
          gamma = std::stod(h.substr(colon + 1));
        } catch (const std::exception&) {
          throw ConfigError("--horizons: bad gamma in '" + h + "'");
        }
        json hj{{"gamma", gamma}};
        if (steps == "inf") {
          hj["H"] = "inf";
        } else {
          try {
            hj["H"] = std::stoi(steps);
          } catch (const std::exception&) {
            throw ConfigError("--horizons: bad H in '" + h + "'");
          }
        }
        j["horizons"].push_back(hj);
      }
    }
    if (!methods.empty()) {
      j["methods"] = json::array();
      for (const auto& m : methods) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) {
          j["methods"].push_back(m);
        } else {
          j["methods"].push_back({{"method", m.substr(0, eq)}, {"kernels", {m.substr(eq + 1)}}});
        }
      }
    }
    if (!manifest.empty()) j["candidates"] = manifest;
    if (!kernel_features.empty()) j["kernel_features"] = kernel_features;
    if (fp_h_star) j["fp_h_star"] = *fp_h_star;
    if (delta) j["delta"] = *delta;
    if (train_fraction) j["train_fraction"] = *train_fraction;
    if (workers) j["workers"] = *workers;
    if (!next_action.empty()) j["next_action"] = next_action;
    if (record_timing) j["record_timing"] = true;
  }
};

ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  auto j = read_json_file(path);
  if (!j.is_object()) throw ConfigError(path + ": config must be an object");
  o.apply(j);
  return config_from_json(j);
}

int run_generate(const std::string& config_path, const std::optional<std::size_t>& n, std::uint64_t seed,
                 const std::string& mdp_out, const std::string& data_out) {
  const auto j = read_json_file(config_path);
  if (!j.is_object() || !j.contains("env")) throw ConfigError(config_path + ": missing 'env'");
  const auto mdp = build_environment(j.at("env"));
  write_text(mdp_out, write_mdp(mdp));
  if (n) {
    std::vector<double> mu;
    std::string desc = "uniform";
    if (j.contains("behavior") && j.at("behavior").is_array()) {
      mu = j.at("behavior").get<std::vector<double>>();
      desc = "explicit";
      if (mu.size() != mdp.n_pairs()) throw ConfigError("behavior: length must equal |S||A|");
    } else {
      mu = behavior_mu(Policy::uniform(mdp.n_states(), mdp.n_actions()));
    }
    write_text(data_out, write_transitions(sample_dataset(mdp, mu, *n, seed, desc)));
  }
  return 0;
}

struct SelectArgs {
  std::string config;
  std::string data;
  std::string method = "rm";
  std::string kernel;
  std::size_t n = 480;
  std::uint64_t seed = 0;
  double eps = 0.0;
  std::string horizon;
  std::string out;
};

int run_select(const SelectArgs& a, const Overrides& o) {
  auto j = read_json_file(a.config);
  if (!j.is_object()) throw ConfigError(a.config + ": config must be an object");
  o.apply(j);
  // a single run only needs one grid point; fill the grids the config may omit
  if (!j.contains("eval_eps_grid")) j["eval_eps_grid"] = {a.eps};
  if (!j.contains("n_grid")) j["n_grid"] = {a.n};
  if (!j.contains("seeds")) j["seeds"] = {a.seed};
  if (!j.contains("methods")) j["methods"] = {"rm"};
  if (!j.contains("horizons")) j["horizons"] = json::parse(R"([{"H": 5, "gamma": 0.9}])");
  const auto cfg = config_from_json(j);

  const Method method = parse_method(a.method);
  std::optional<Kernel> kernel_holder;
  HorizonSpec horizon = cfg.horizons.front();
  if (!a.horizon.empty()) {
    Overrides tmp;
    tmp.horizons = {a.horizon};
    json hj;
    tmp.apply(hj);
    horizon = config_from_json([&] {
                auto c = j;
                c["horizons"] = hj["horizons"];
                return c;
              }())
                  .horizons.front();
  }

  const TabularMdp mdp = build_environment(cfg.env);
  const auto mu = cfg.behavior_mu ? *cfg.behavior_mu : behavior_mu(Policy::uniform(mdp.n_states(), mdp.n_actions()));
  const auto policy = mix_policies(Policy::uniform(mdp.n_states(), mdp.n_actions()), greedy_expert(mdp, horizon), a.eps);
  const auto data = a.data.empty() ? sample_dataset(mdp, mu, a.n, dataset_seed(a.seed, a.n), cfg.behavior_mu ? "explicit" : "uniform")
                                   : load_transitions(a.data);
  if (data.n_states() != mdp.n_states() || data.n_actions() != mdp.n_actions())
    throw ConfigError("dataset shape does not match the environment");
  const auto [train, valid] = split_dataset(data, cfg.train_fraction, data.seed());
  const auto cset = instantiate_candidates(cfg.candidates, {train, policy, horizon, &mdp, cfg.next_action, cfg.workers});

  if (uses_kernel(method)) {
    if (a.kernel.empty()) throw ConfigError(a.method + " needs --kernel");
    kernel_holder.emplace(KernelSpec::parse(a.kernel),
                          fit_feature_normalization(
                              feature_map_from_name(cfg.kernel_features, mdp.n_states(), mdp.n_actions()), train));
  }
  std::optional<FixedPointConfig> fp;
  if (cfg.fp_h_star) fp = FixedPointConfig{*cfg.fp_h_star, 1e-12};
  SelectionSession session(cset, valid, policy, horizon, cfg.next_action, cfg.workers);
  auto rep = session.select(method, kernel_holder ? &*kernel_holder : nullptr, fp);
  attach_oracle(rep, cset, {mdp, policy, horizon, mu, cfg.probe_count, 0}, kernel_holder ? &*kernel_holder : nullptr);
  write_text(a.out, report_to_json(rep).dump(2) + "\n");
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& out_dir, const Overrides& o) {
  const auto cfg = load_with_overrides(config_path, o);
  const auto rows = run_experiment(cfg);
  emit_results(rows, out_dir, cfg.delta);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.ok();
  std::cerr << "sweep: " << rows.size() << " rows, " << failed << " failed, written to " << out_dir << "\n";
  return all_rows_assumption_failures(rows) ? kExitAssumption : 0;
}

int run_rate_check(const std::string& dir, bool as_json) {
  const auto rows = read_results(dir);
  // series that never ran (e.g. every row failed:horizon) have nothing to fit
  std::set<std::pair<std::string, std::string>> live;
  for (const auto& r : rows)
    if (r.ok()) live.emplace(r.method, r.kernel);
  std::vector<RunResult> fitted;
  for (const auto& r : rows)
    if (live.contains({r.method, r.kernel})) fitted.push_back(r);
  const auto checks = rate_check(fitted);
  if (as_json) {
    json out = json::array();
    for (const auto& c : checks)
      out.push_back({{"method", c.method},
                     {"kernel", c.kernel},
                     {"n", c.n_values},
                     {"median_excess_mae", c.medians},
                     {"slope", c.slope ? json(*c.slope) : json("floor")}});
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  for (const auto& c : checks) {
    std::cout << c.method << (c.kernel.empty() ? "" : "[" + c.kernel + "]") << " slope=" << c.slope_label();
    for (std::size_t i = 0; i < c.n_values.size(); ++i)
      std::cout << " n=" << c.n_values[i] << ":" << format_double(c.medians[i]);
    std::cout << "\n";
  }
  return 0;
}

int run_report(const std::string& dir, double delta) {
  const auto rows = read_results(dir);
  const auto s = summarize(rows, delta);
  std::cout << "| series | rows | failed | mean excess MAE | sd |\n|---|---|---|---|---|\n";
  for (const auto& e : s.at("series"))
    std::cout << "| " << e.at("series").get<std::string>() << " | " << e.at("rows") << " | " << e.at("failed")
              << " | " << format_double(e.at("mean_excess_mae").get<double>()) << " | "
              << format_double(e.at("sd_excess_mae").get<double>()) << " |\n";
  std::cout << "\n| series | eps_eval | mean excess MAE | se |\n|---|---|---|---|\n";
  for (const auto& e : s.at("series"))
    for (const auto& p : e.at("by_eps_eval"))
      std::cout << "| " << e.at("series").get<std::string>() << " | " << format_double(p.at("eps_eval").get<double>())
                << " | " << format_double(p.at("mean_excess_mae").get<double>()) << " | "
                << format_double(p.at("se_excess_mae").get<double>()) << " |\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FQE hyperparameter selection on tabular MDPs"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Write the environment MDP and optionally a sampled dataset");
  std::string gen_config, mdp_out = "-", data_out;
  std::optional<std::size_t> gen_n;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "Config file with an env section")->required();
  gen->add_option("--n", gen_n, "Number of transitions to sample");
  gen->add_option("--seed", gen_seed, "Sampling seed");
  gen->add_option("--mdp-out", mdp_out, "MDP output path (- for stdout)");
  gen->add_option("--data-out", data_out, "Dataset output path (JSON lines)");

  auto* sel = app.add_subcommand("select", "Run one selection and print the report");
  SelectArgs sa;
  Overrides sel_over;
  sel->add_option("--config", sa.config, "Config file")->required();
  sel->add_option("--data", sa.data, "Transition file; sampled from the env when omitted");
  sel->add_option("--method", sa.method, "rm, klm, rm_fp or klm_fp");
  sel->add_option("--kernel", sa.kernel, "Kernel for klm and klm_fp, e.g. exp:p=1:sigma=1");
  sel->add_option("--n", sa.n, "Sample size when sampling");
  sel->add_option("--seed", sa.seed, "Seed when sampling");
  sel->add_option("--eps", sa.eps, "Evaluation-policy weight on the uniform policy");
  sel->add_option("--horizon", sa.horizon, "H:gamma for this run");
  sel->add_option("--out", sa.out, "Report path (stdout by default)");
  sel_over.add_to(*sel);

  auto* sweep = app.add_subcommand("sweep", "Run the full grid and write results");
  std::string sweep_config, sweep_out = "results";
  Overrides sweep_over;
  sweep->add_option("--config", sweep_config, "Config file")->required();
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep_over.add_to(*sweep);

  auto* rate = app.add_subcommand("rate-check", "Fit log-log slopes of median excess MAE against n");
  std::string rate_dir;
  bool rate_json = false;
  rate->add_option("--results", rate_dir, "Directory written by sweep")->required();
  rate->add_flag("--json", rate_json, "Print JSON");

  auto* rep = app.add_subcommand("report", "Print summary tables from a results directory");
  std::string rep_dir;
  double rep_delta = 0.05;
  rep->add_option("--results", rep_dir, "Directory written by sweep")->required();
  rep->add_option("--delta", rep_delta, "Confidence parameter shown with the tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return run_generate(gen_config, gen_n, gen_seed, mdp_out, data_out);
    if (*sel) return run_select(sa, sel_over);
    if (*sweep) return run_sweep(sweep_config, sweep_out, sweep_over);
    if (*rate) return run_rate_check(rate_dir, rate_json);
    if (*rep) return run_report(rep_dir, rep_delta);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidHorizon& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
