#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fqesel/dataset.hpp"
#include "fqesel/errors.hpp"
#include "fqesel/mdp.hpp"
#include "fqesel/operators.hpp"
#include "fqesel/parallel.hpp"

namespace fqesel {

/// One candidate operator as listed in a manifest. Only the fields relevant
/// to `kind` are used.
struct CandidateEntry {
  std::string id;
  OperatorKind kind = OperatorKind::tabular_mean;
  double lambda = 0.0;
  std::size_t k = 1;
  std::string features = "coords";
  std::string base;
  double shift = 0.0;

  friend bool operator==(const CandidateEntry&, const CandidateEntry&) = default;
};

using CandidateManifest = std::vector<CandidateEntry>;

/// Builds a feature map from its name: "onehot", "coords" or "proj:d=<dim>:seed=<seed>".
inline FeatureMap feature_map_from_name(std::string_view name, std::size_t n_states, std::size_t n_actions) {
  if (name == "onehot") return FeatureMap::onehot(n_states, n_actions);
  if (name == "coords") return FeatureMap::coords(n_states, n_actions);
  if (name.starts_with("proj:d=")) {
    const auto rest = name.substr(7);
    const auto sep = rest.find(":seed=");
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    if (sep != std::string_view::npos) {
      const auto d_txt = rest.substr(0, sep);
      const auto s_txt = rest.substr(sep + 6);
      const auto r1 = std::from_chars(d_txt.data(), d_txt.data() + d_txt.size(), dim);
      const auto r2 = std::from_chars(s_txt.data(), s_txt.data() + s_txt.size(), seed);
      if (r1.ec == std::errc{} && r1.ptr == d_txt.data() + d_txt.size() && r2.ec == std::errc{} &&
          r2.ptr == s_txt.data() + s_txt.size() && dim > 0)
        return FeatureMap::random_projection(n_states, n_actions, dim, seed);
    }
  }
  throw ConfigError("unknown feature map '" + std::string(name) + "'");
}

namespace detail {

inline OperatorKind parse_manifest_kind(const std::string& s) {
  if (s == "exact_tabular") return OperatorKind::exact_tabular;
  if (s == "tabular_mean") return OperatorKind::tabular_mean;
  if (s == "fqe_ridge") return OperatorKind::fqe_ridge;
  if (s == "fqe_knn") return OperatorKind::fqe_knn;
  if (s == "constant_shift") return OperatorKind::constant_shift;
  throw ConfigError("manifest: unsupported kind '" + s + "'");
}

inline void check_features_name(const std::string& name) {
  if (name == "onehot" || name == "coords") return;
  feature_map_from_name(name, 1, 1);
}

}  // namespace detail

inline CandidateEntry candidate_entry_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("manifest: each candidate must be an object");
  CandidateEntry e;
  try {
    e.id = j.at("id").get<std::string>();
    e.kind = detail::parse_manifest_kind(j.at("kind").get<std::string>());
    std::set<std::string> allowed{"id", "kind"};
    switch (e.kind) {
      case OperatorKind::fqe_ridge:
        e.lambda = j.at("lambda").get<double>();
        e.features = j.value("features", e.features);
        allowed.insert({"lambda", "features"});
        if (!(e.lambda >= 0.0)) throw ConfigError("manifest: " + e.id + ": lambda must be >= 0");
        detail::check_features_name(e.features);
        break;
      case OperatorKind::fqe_knn:
        e.k = j.at("k").get<std::size_t>();
        e.features = j.value("features", e.features);
        allowed.insert({"k", "features"});
        if (e.k == 0) throw ConfigError("manifest: " + e.id + ": k must be >= 1");
        detail::check_features_name(e.features);
        break;
      case OperatorKind::constant_shift:
        e.base = j.at("base").get<std::string>();
        e.shift = j.at("shift").get<double>();
        allowed.insert({"base", "shift"});
        break;
      default: break;
    }
    for (const auto& [key, _] : j.items())
      if (!allowed.contains(key)) throw ConfigError("manifest: " + e.id + ": unknown key '" + key + "'");
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("manifest: ") + ex.what());
  }
  return e;
}

inline nlohmann::json candidate_entry_to_json(const CandidateEntry& e) {
  nlohmann::json j{{"id", e.id}, {"kind", to_string(e.kind)}};
  switch (e.kind) {
    case OperatorKind::fqe_ridge:
      j["lambda"] = e.lambda;
      j["features"] = e.features;
      break;
    case OperatorKind::fqe_knn:
      j["k"] = e.k;
      j["features"] = e.features;
      break;
    case OperatorKind::constant_shift:
      j["base"] = e.base;
      j["shift"] = e.shift;
      break;
    default: break;
  }
  return j;
}

/// Checks ids are unique and every shift refers to an earlier entry.
inline void validate_manifest(const CandidateManifest& m) {
  if (m.empty()) throw ConfigError("manifest: no candidates");
  std::set<std::string> seen;
  for (const auto& e : m) {
    if (e.id.empty()) throw ConfigError("manifest: empty id");
    if (e.kind == OperatorKind::constant_shift && !seen.contains(e.base))
      throw ConfigError("manifest: " + e.id + ": base '" + e.base + "' must be listed earlier");
    if (!seen.insert(e.id).second) throw ConfigError("manifest: duplicate id '" + e.id + "'");
  }
}

inline CandidateManifest manifest_from_json(const nlohmann::json& j) {
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    for (const auto& [key, _] : j.items())
      if (key != "candidates") throw ConfigError("manifest: unknown key '" + key + "'");
    if (!j.contains("candidates")) throw ConfigError("manifest: missing 'candidates'");
    list = &j.at("candidates");
  }
  if (!list->is_array()) throw ConfigError("manifest: candidates must be an array");
  CandidateManifest m;
  for (const auto& c : *list) m.push_back(candidate_entry_from_json(c));
  validate_manifest(m);
  return m;
}

inline nlohmann::json manifest_to_json(const CandidateManifest& m) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : m) list.push_back(candidate_entry_to_json(e));
  return {{"candidates", list}};
}

inline CandidateManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw ConfigError(path + ": " + ex.what());
  }
}

/// Eight operators from well- to mis-specified: tabular means, ridge on
/// one-hot, projected and coordinate features, k-NN at three scales, and a
/// tabular mean shifted by +0.5.
inline CandidateManifest default_manifest() {
  auto fqe = [](std::string id, OperatorKind kind, double lambda, std::size_t k, std::string features) {
    CandidateEntry e;
    e.id = std::move(id);
    e.kind = kind;
    e.lambda = lambda;
    e.k = k;
    e.features = std::move(features);
    return e;
  };
  CandidateManifest m;
  m.push_back(fqe("tabular_mean", OperatorKind::tabular_mean, 0.0, 1, "coords"));
  m.push_back(fqe("ridge_1e-4", OperatorKind::fqe_ridge, 1e-4, 1, "onehot"));
  m.push_back(fqe("ridge_1e-2", OperatorKind::fqe_ridge, 1e-2, 1, "proj:d=4:seed=1"));
  m.push_back(fqe("ridge_1", OperatorKind::fqe_ridge, 1.0, 1, "coords"));
  m.push_back(fqe("knn_1", OperatorKind::fqe_knn, 0.0, 1, "coords"));
  m.push_back(fqe("knn_8", OperatorKind::fqe_knn, 0.0, 8, "coords"));
  m.push_back(fqe("knn_64", OperatorKind::fqe_knn, 0.0, 64, "coords"));
  CandidateEntry shifted;
  shifted.id = "shifted_mean";
  shifted.kind = OperatorKind::constant_shift;
  shifted.base = "tabular_mean";
  shifted.shift = 0.5;
  m.push_back(shifted);
  return m;
}

/// Inputs needed to turn a manifest into fitted operators. `mdp` is only
/// required for exact_tabular entries.
struct FitContext {
  const TransitionDataset& train;
  const Policy& policy;
  HorizonSpec horizon;
  const TabularMdp* mdp = nullptr;
  NextAction next_action = NextAction::expected;
  unsigned workers = 1;
};

inline CandidateSet instantiate_candidates(const CandidateManifest& m, const FitContext& ctx) {
  validate_manifest(m);
  const std::size_t ns = ctx.train.n_states();
  const std::size_t na = ctx.train.n_actions();
  std::vector<std::optional<BellmanOperatorCandidate>> fitted(m.size());
  parallel_for(m.size(), ctx.workers, [&](std::size_t i) {
    const auto& e = m[i];
    switch (e.kind) {
      case OperatorKind::exact_tabular:
        if (ctx.mdp == nullptr) throw ConfigError("manifest: " + e.id + " needs the tabular model");
        fitted[i] = make_exact_operator(*ctx.mdp, ctx.policy, ctx.horizon, e.id);
        break;
      case OperatorKind::tabular_mean:
        fitted[i] = fit_fqe_operator(ctx.train, ctx.policy, TabularMeanSpec{}, ctx.horizon, e.id, ctx.next_action);
        break;
      case OperatorKind::fqe_ridge:
        fitted[i] = fit_fqe_operator(ctx.train, ctx.policy, RidgeSpec{e.lambda, feature_map_from_name(e.features, ns, na)},
                                     ctx.horizon, e.id, ctx.next_action);
        break;
      case OperatorKind::fqe_knn:
        fitted[i] = fit_fqe_operator(ctx.train, ctx.policy, KnnSpec{e.k, feature_map_from_name(e.features, ns, na)},
                                     ctx.horizon, e.id, ctx.next_action);
        break;
      default: break;
    }
  });
  std::vector<BellmanOperatorCandidate> out;
  out.reserve(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].kind == OperatorKind::constant_shift) {
      std::size_t b = 0;
      while (m[b].id != m[i].base) ++b;
      fitted[i] = make_constant_shift(*fitted[b], m[i].shift, m[i].id);
    }
    out.push_back(*fitted[i]);
  }
  return CandidateSet(std::move(out));
}

}  // namespace fqesel
