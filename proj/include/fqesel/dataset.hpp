#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fqesel/errors.hpp"
#include "fqesel/mdp.hpp"
#include "fqesel/rng.hpp"

namespace fqesel {

struct Transition {
  std::size_t s = 0;
  std::size_t a = 0;
  double r = 0.0;
  std::size_t s_next = 0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Offline data: n tuples (s, a, r, s') with (s, a) ~ mu.
class TransitionDataset {
 public:
  TransitionDataset() = default;
  TransitionDataset(std::size_t n_states, std::size_t n_actions, std::vector<Transition> records,
                    std::vector<double> mu, std::string mu_descriptor, std::uint64_t seed)
      : n_states_(n_states),
        n_actions_(n_actions),
        records_(std::move(records)),
        mu_(std::move(mu)),
        mu_descriptor_(std::move(mu_descriptor)),
        seed_(seed) {
    if (records_.empty()) throw InvalidArgument("TransitionDataset: no records");
    for (const auto& t : records_) {
      if (t.s >= n_states_ || t.a >= n_actions_ || t.s_next >= n_states_)
        throw InvalidArgument("TransitionDataset: id out of range");
      if (!(t.r >= 0.0 && t.r <= 1.0)) throw InvalidArgument("TransitionDataset: reward outside [0, 1]");
    }
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<Transition>& records() const noexcept { return records_; }
  const Transition& operator[](std::size_t i) const { return records_[i]; }
  std::size_t pair(std::size_t i) const { return records_[i].s * n_actions_ + records_[i].a; }
  /// Explicit query distribution, empty if unknown.
  const std::vector<double>& mu() const noexcept { return mu_; }
  const std::string& mu_descriptor() const noexcept { return mu_descriptor_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Order-sensitive hash of the records.
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = mix64(records_.size());
    for (const auto& t : records_) {
      h = mix64(h ^ (t.s * 0x100000001B3ULL + t.a));
      h = mix64(h ^ std::bit_cast<std::uint64_t>(t.r));
      h = mix64(h ^ t.s_next);
    }
    return h;
  }

  friend bool operator==(const TransitionDataset&, const TransitionDataset&) = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<Transition> records_;
  std::vector<double> mu_;
  std::string mu_descriptor_;
  std::uint64_t seed_ = 0;
};

/// mu(s, a) = S-uniform times a behavior policy, as a flat pair vector.
inline std::vector<double> behavior_mu(const Policy& behavior) {
  std::vector<double> mu(behavior.probs().begin(), behavior.probs().end());
  for (double& x : mu) x /= static_cast<double>(behavior.n_states());
  return mu;
}

/// n i.i.d. tuples with (s, a) ~ mu, r ~ R(s, a), s' ~ T(s, a). Record i
/// depends only on (seed, i).
inline TransitionDataset sample_dataset(const TabularMdp& mdp, std::span<const double> mu,
                                        std::size_t n, std::uint64_t seed,
                                        std::string mu_descriptor = "explicit") {
  if (n == 0) throw InvalidArgument("sample_dataset: n must be positive");
  if (mu.size() != mdp.n_pairs()) throw InvalidArgument("sample_dataset: mu size mismatch");
  detail::check_distribution(mu, "mu");
  const DiscreteSampler pick_pair(mu);
  const auto base = CounterRng::stream(seed, "sample_dataset");
  std::vector<Transition> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = base.split(i);
    const std::size_t u = pick_pair(rng);
    const auto law = mdp.reward_law(u);
    const double r = rng.uniform() < law.p_hi ? law.hi : law.lo;
    const std::size_t s2 = rng.categorical(mdp.next_state_probs(u));
    recs[i] = {u / mdp.n_actions(), u % mdp.n_actions(), r, s2};
  }
  return TransitionDataset(mdp.n_states(), mdp.n_actions(), std::move(recs),
                           std::vector<double>(mu.begin(), mu.end()), std::move(mu_descriptor), seed);
}

/// Random disjoint partition into (train, valid) with round(fraction * n)
/// training records. Each part keeps the original record order.
inline std::pair<TransitionDataset, TransitionDataset> split_dataset(const TransitionDataset& d,
                                                                     double train_fraction,
                                                                     std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("split_dataset: fraction must lie in (0, 1)");
  const std::size_t n = d.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    throw InvalidArgument("split_dataset: fraction " + std::to_string(train_fraction) +
                          " leaves an empty part for n = " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  auto rng = CounterRng::stream(seed, "split_dataset");
  rng.shuffle(idx);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::vector<Transition> train, valid;
  train.reserve(n_train);
  valid.reserve(n - n_train);
  for (std::size_t k = 0; k < n; ++k) (k < n_train ? train : valid).push_back(d[idx[k]]);
  return {TransitionDataset(d.n_states(), d.n_actions(), std::move(train), d.mu(), d.mu_descriptor(), d.seed()),
          TransitionDataset(d.n_states(), d.n_actions(), std::move(valid), d.mu(), d.mu_descriptor(), d.seed())};
}

// ---------------------------------------------------------------------------
// Feature maps
// ---------------------------------------------------------------------------

/// Deterministic embedding of (s, a) into R^dim followed by a stored
/// per-dimension affine normalization (x - shift) / scale.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t n_states, std::size_t n_actions, std::size_t dim, std::vector<double> raw,
             std::string name)
      : n_states_(n_states),
        n_actions_(n_actions),
        dim_(dim),
        raw_(std::move(raw)),
        shift_(dim, 0.0),
        scale_(dim, 1.0),
        name_(std::move(name)) {
    if (dim_ == 0) throw InvalidArgument("FeatureMap: dim must be positive");
    if (raw_.size() != n_states_ * n_actions_ * dim_) throw InvalidArgument("FeatureMap: table size");
  }

  static FeatureMap onehot(std::size_t n_states, std::size_t n_actions) {
    const std::size_t pairs = n_states * n_actions;
    std::vector<double> raw(pairs * pairs, 0.0);
    for (std::size_t i = 0; i < pairs; ++i) raw[i * pairs + i] = 1.0;
    return FeatureMap(n_states, n_actions, pairs, std::move(raw), "onehot");
  }

  /// (state index, action index) as two numeric coordinates.
  static FeatureMap coords(std::size_t n_states, std::size_t n_actions) {
    std::vector<double> raw;
    raw.reserve(n_states * n_actions * 2);
    for (std::size_t s = 0; s < n_states; ++s)
      for (std::size_t a = 0; a < n_actions; ++a) {
        raw.push_back(static_cast<double>(s));
        raw.push_back(static_cast<double>(a));
      }
    return FeatureMap(n_states, n_actions, 2, std::move(raw), "coords");
  }

  /// One-hot features pushed through a fixed Gaussian projection to `dim`
  /// dimensions. Low dims make regressors deliberately misspecified.
  static FeatureMap random_projection(std::size_t n_states, std::size_t n_actions, std::size_t dim,
                                      std::uint64_t seed) {
    auto rng = CounterRng::stream(seed, "random_projection");
    std::vector<double> raw(n_states * n_actions * dim);
    for (double& x : raw) x = rng.normal();
    return FeatureMap(n_states, n_actions, dim, std::move(raw),
                      "proj:d=" + std::to_string(dim) + ":seed=" + std::to_string(seed));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  const std::string& name() const noexcept { return name_; }
  const std::vector<double>& shift() const noexcept { return shift_; }
  const std::vector<double>& scale() const noexcept { return scale_; }

  void embed_into(std::size_t pair, std::span<double> out) const {
    for (std::size_t k = 0; k < dim_; ++k) out[k] = (raw_[pair * dim_ + k] - shift_[k]) / scale_[k];
  }
  std::vector<double> embed(std::size_t pair) const {
    std::vector<double> v(dim_);
    embed_into(pair, v);
    return v;
  }
  std::vector<double> embed(std::size_t s, std::size_t a) const { return embed(s * n_actions_ + a); }

  /// Normalized embeddings of every pair, pair-major.
  std::vector<double> table() const {
    const std::size_t pairs = n_states_ * n_actions_;
    std::vector<double> t(pairs * dim_);
    for (std::size_t i = 0; i < pairs; ++i) embed_into(i, std::span<double>(t).subspan(i * dim_, dim_));
    return t;
  }

  /// Compose an extra normalization step on top of the current one.
  void compose_normalization(std::span<const double> mean, std::span<const double> sd) {
    for (std::size_t k = 0; k < dim_; ++k) {
      shift_[k] += mean[k] * scale_[k];
      scale_[k] *= sd[k];
    }
  }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> raw_;
  std::vector<double> shift_;
  std::vector<double> scale_;
  std::string name_;
};

/// Standardize each embedding dimension to mean 0 / variance 1 over the
/// (s, a) pairs of `d` (population moments). Dimensions with standard
/// deviation below 1e-12 are only centered.
inline FeatureMap fit_feature_normalization(FeatureMap features, const TransitionDataset& d) {
  if (d.size() < 2) throw InvalidArgument("fit_feature_normalization: need at least two records");
  if (d.n_states() != features.n_states() || d.n_actions() != features.n_actions())
    throw InvalidArgument("fit_feature_normalization: shape mismatch");
  const std::size_t dim = features.dim();
  // Accumulate per pair first: the embedding only depends on the pair.
  std::vector<double> count(d.n_states() * d.n_actions(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) count[d.pair(i)] += 1.0;
  const auto n = static_cast<double>(d.size());
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0), e(dim);
  for (std::size_t p = 0; p < count.size(); ++p) {
    if (count[p] == 0.0) continue;
    features.embed_into(p, e);
    for (std::size_t k = 0; k < dim; ++k) mean[k] += count[p] * e[k];
  }
  for (double& m : mean) m /= n;
  for (std::size_t p = 0; p < count.size(); ++p) {
    if (count[p] == 0.0) continue;
    features.embed_into(p, e);
    for (std::size_t k = 0; k < dim; ++k) sd[k] += count[p] * (e[k] - mean[k]) * (e[k] - mean[k]);
  }
  for (double& s : sd) {
    s = std::sqrt(s / n);
    if (s < 1e-12) s = 1.0;
  }
  features.compose_normalization(mean, sd);
  return features;
}

// ---------------------------------------------------------------------------
// Transition files: a JSON header line followed by one JSON object per record.
// ---------------------------------------------------------------------------

inline std::string write_transitions(const TransitionDataset& d) {
  nlohmann::json header = {{"n", d.size()},
                           {"seed", d.seed()},
                           {"n_states", d.n_states()},
                           {"n_actions", d.n_actions()},
                           {"mu", {{"kind", d.mu_descriptor()}, {"probs", d.mu()}}}};
  std::string out = header.dump() + "\n";
  for (const auto& t : d.records()) {
    nlohmann::json rec = {{"s", t.s}, {"a", t.a}, {"r", t.r}, {"s_next", t.s_next}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline TransitionDataset read_transitions(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  try {
    if (!std::getline(in, line)) throw ConfigError("transition file: missing header");
    const auto header = nlohmann::json::parse(line);
    const auto n = header.at("n").get<std::size_t>();
    std::vector<Transition> recs;
    recs.reserve(n);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      recs.push_back({j.at("s").get<std::size_t>(), j.at("a").get<std::size_t>(), j.at("r").get<double>(),
                      j.at("s_next").get<std::size_t>()});
    }
    if (recs.size() != n)
      throw ConfigError("transition file: header says n = " + std::to_string(n) + " but found " +
                        std::to_string(recs.size()) + " records");
    const auto& mu = header.at("mu");
    return TransitionDataset(header.at("n_states").get<std::size_t>(), header.at("n_actions").get<std::size_t>(),
                             std::move(recs), mu.at("probs").get<std::vector<double>>(),
                             mu.at("kind").get<std::string>(), header.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("transition file: ") + e.what());
  }
}

inline void save_transitions(const TransitionDataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << write_transitions(d);
  if (!out) throw IoError("write failed: " + path);
}

inline TransitionDataset load_transitions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return read_transitions(ss.str());
}

}  // namespace fqesel
