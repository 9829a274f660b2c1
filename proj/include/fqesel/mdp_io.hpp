#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fqesel/errors.hpp"
#include "fqesel/mdp.hpp"

namespace fqesel {

// MDP documents are JSON objects. Doubles are written in shortest round-trip
// form, so parse(write(m)) reproduces every value bit for bit.

inline nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    const auto row = mdp.next_state_probs(i);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  const auto init = mdp.initial_dist();
  const auto mean = mdp.reward_means();
  const auto spread = mdp.reward_spreads();
  return {{"n_states", mdp.n_states()},
          {"n_actions", mdp.n_actions()},
          {"initial_dist", std::vector<double>(init.begin(), init.end())},
          {"transition", rows},
          {"reward_mean", std::vector<double>(mean.begin(), mean.end())},
          {"reward_noise", std::vector<double>(spread.begin(), spread.end())}};
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  static const char* const keys[] = {"n_states",   "n_actions",   "initial_dist",
                                     "transition", "reward_mean", "reward_noise"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("MDP document: unknown key '" + it.key() + "'");
  }
  try {
    const auto ns = j.at("n_states").get<std::size_t>();
    const auto na = j.at("n_actions").get<std::size_t>();
    std::vector<double> trans;
    const auto& rows = j.at("transition");
    if (rows.size() != ns * na) throw ConfigError("MDP document: expected one transition row per (s, a)");
    for (const auto& row : rows) {
      auto r = row.get<std::vector<double>>();
      if (r.size() != ns) throw ConfigError("MDP document: transition row has wrong length");
      trans.insert(trans.end(), r.begin(), r.end());
    }
    std::vector<double> noise;
    if (j.contains("reward_noise")) noise = j.at("reward_noise").get<std::vector<double>>();
    return TabularMdp(ns, na, j.at("initial_dist").get<std::vector<double>>(), std::move(trans),
                      j.at("reward_mean").get<std::vector<double>>(), std::move(noise));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("MDP document: ") + e.what());
  }
}

inline std::string write_mdp(const TabularMdp& mdp) { return mdp_to_json(mdp).dump(2) + "\n"; }

inline TabularMdp read_mdp(const std::string& text) {
  try {
    return mdp_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("MDP document: ") + e.what());
  }
}

inline void save_mdp(const TabularMdp& mdp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << write_mdp(mdp);
  if (!out) throw IoError("write failed: " + path);
}

inline TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return read_mdp(ss.str());
}

}  // namespace fqesel
