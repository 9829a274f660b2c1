#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fqesel/dataset.hpp"
#include "fqesel/errors.hpp"
#include "fqesel/mdp.hpp"
#include "fqesel/rng.hpp"

namespace fqesel {

// ---------------------------------------------------------------------------
// Regression targets
// ---------------------------------------------------------------------------

/// How a' ~ pi(s') enters r + gamma f(s', a'). `expected` averages over pi
/// exactly; `sampled` draws one a' per record, fixed by (action_seed, index).
enum class NextAction { expected, sampled };

struct TargetSpec {
  double gamma = 1.0;
  NextAction next_action = NextAction::expected;
  std::uint64_t action_seed = 0;
};

/// Continuation value of f at each record's successor state.
inline std::vector<double> next_values(const SaFunction& f, const TransitionDataset& d, const Policy& policy,
                                       const TargetSpec& spec) {
  std::vector<double> v(d.size());
  if (spec.next_action == NextAction::expected) {
    const auto vs = state_values(policy, f);
    for (std::size_t i = 0; i < d.size(); ++i) v[i] = vs[d[i].s_next];
    return v;
  }
  const auto base = CounterRng::stream(spec.action_seed, "next_action");
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto rng = base.split(i);
    const std::size_t a2 = rng.categorical(policy.row(d[i].s_next));
    v[i] = f(d[i].s_next, a2);
  }
  return v;
}

/// Regression targets y_i = r_i + gamma * V_f(s'_i).
inline std::vector<double> bellman_targets(const SaFunction& f, const TransitionDataset& d, const Policy& policy,
                                           const TargetSpec& spec) {
  auto y = next_values(f, d, policy, spec);
  for (std::size_t i = 0; i < d.size(); ++i) y[i] = d[i].r + spec.gamma * y[i];
  return y;
}

// ---------------------------------------------------------------------------
// Candidate operators
// ---------------------------------------------------------------------------

enum class OperatorKind { exact_tabular, fqe_ridge, fqe_knn, tabular_mean, constant_shift, perturbed, affine, constant };

inline std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::exact_tabular: return "exact_tabular";
    case OperatorKind::fqe_ridge: return "fqe_ridge";
    case OperatorKind::fqe_knn: return "fqe_knn";
    case OperatorKind::tabular_mean: return "tabular_mean";
    case OperatorKind::constant_shift: return "constant_shift";
    case OperatorKind::perturbed: return "perturbed";
    case OperatorKind::affine: return "affine";
    case OperatorKind::constant: return "constant";
  }
  return "unknown";
}

namespace detail {

/// Unclipped action of an operator. Implementations are immutable after
/// construction, so one instance can be shared by any number of threads.
class OperatorImpl {
 public:
  virtual ~OperatorImpl() = default;
  virtual SaFunction apply_raw(const QFunction& f) const = 0;
};

}  // namespace detail

/// One hyperparameter configuration X: a deterministic map from [0, C]-valued
/// Q-functions to [0, C]-valued Q-functions (clipping is part of the operator).
class BellmanOperatorCandidate {
 public:
  BellmanOperatorCandidate(std::string id, OperatorKind kind, std::string params, std::string fitted_on,
                           double clip_bound, std::shared_ptr<const detail::OperatorImpl> impl)
      : id_(std::move(id)),
        kind_(kind),
        params_(std::move(params)),
        fitted_on_(std::move(fitted_on)),
        clip_bound_(clip_bound),
        impl_(std::move(impl)) {
    if (id_.empty()) throw InvalidArgument("operator id must be non-empty");
    if (!(clip_bound_ > 0.0)) throw InvalidArgument("operator clip bound must be positive");
  }

  const std::string& id() const noexcept { return id_; }
  OperatorKind kind() const noexcept { return kind_; }
  const std::string& params() const noexcept { return params_; }
  const std::string& fitted_on() const noexcept { return fitted_on_; }
  double clip_bound() const noexcept { return clip_bound_; }

  QFunction apply(const QFunction& f) const { return clip_q(impl_->apply_raw(f), clip_bound_); }
  /// The map before the final clip.
  SaFunction apply_unclipped(const QFunction& f) const { return impl_->apply_raw(f); }

 private:
  std::string id_;
  OperatorKind kind_;
  std::string params_;
  std::string fitted_on_;
  double clip_bound_;
  std::shared_ptr<const detail::OperatorImpl> impl_;
};

/// X f, clipped to [0, C].
inline QFunction apply_operator(const BellmanOperatorCandidate& x, const QFunction& f) { return x.apply(f); }

/// Ordered candidate list with unique ids.
class CandidateSet {
 public:
  explicit CandidateSet(std::vector<BellmanOperatorCandidate> candidates) : items_(std::move(candidates)) {
    if (items_.empty()) throw InvalidArgument("CandidateSet: at least one candidate required");
    std::unordered_set<std::string> seen;
    for (const auto& c : items_)
      if (!seen.insert(c.id()).second) throw InvalidArgument("CandidateSet: duplicate id '" + c.id() + "'");
  }

  std::size_t size() const noexcept { return items_.size(); }
  const BellmanOperatorCandidate& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < items_.size(); ++i)
      if (items_[i].id() == id) return i;
    throw InvalidArgument("operator '" + id + "' is not in the candidate set");
  }

 private:
  std::vector<BellmanOperatorCandidate> items_;
};

// --- analytic operators -----------------------------------------------------

namespace detail {

class ExactOperator final : public OperatorImpl {
 public:
  ExactOperator(TabularMdp mdp, Policy policy, double gamma)
      : mdp_(std::move(mdp)), policy_(std::move(policy)), gamma_(gamma) {}
  SaFunction apply_raw(const QFunction& f) const override { return bellman_affine(mdp_, policy_, gamma_, f); }

 private:
  TabularMdp mdp_;
  Policy policy_;
  double gamma_;
};

class ShiftOperator final : public OperatorImpl {
 public:
  ShiftOperator(BellmanOperatorCandidate base, std::vector<double> offsets)
      : base_(std::move(base)), offsets_(std::move(offsets)) {}
  SaFunction apply_raw(const QFunction& f) const override {
    SaFunction g = base_.apply_unclipped(f);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += offsets_.size() == 1 ? offsets_[0] : offsets_[i];
    return g;
  }

 private:
  BellmanOperatorCandidate base_;
  std::vector<double> offsets_;
};

class AffineOperator final : public OperatorImpl {
 public:
  AffineOperator(std::size_t ns, std::size_t na, Eigen::MatrixXd m, Eigen::VectorXd b)
      : ns_(ns), na_(na), m_(std::move(m)), b_(std::move(b)) {}
  SaFunction apply_raw(const QFunction& f) const override {
    const Eigen::Map<const Eigen::VectorXd> fv(f.values().data(), static_cast<Eigen::Index>(f.size()));
    const Eigen::VectorXd g = b_ + m_ * fv;
    return SaFunction(ns_, na_, std::vector<double>(g.data(), g.data() + g.size()));
  }

 private:
  std::size_t ns_, na_;
  Eigen::MatrixXd m_;
  Eigen::VectorXd b_;
};

class ConstantOperator final : public OperatorImpl {
 public:
  explicit ConstantOperator(SaFunction q) : q_(std::move(q)) {}
  SaFunction apply_raw(const QFunction&) const override { return q_; }

 private:
  SaFunction q_;
};

inline std::string format_param(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// clip(B_pi f): the true operator of (mdp, pi) composed with clipping.
inline BellmanOperatorCandidate make_exact_operator(const TabularMdp& mdp, const Policy& policy,
                                                    const HorizonSpec& horizon, std::string id = "exact_tabular") {
  return {std::move(id), OperatorKind::exact_tabular, "", "analytic", time_constant(horizon),
          std::make_shared<detail::ExactOperator>(mdp, policy, horizon.gamma)};
}

/// clip(base f + c).
inline BellmanOperatorCandidate make_constant_shift(const BellmanOperatorCandidate& base, double c, std::string id) {
  return {std::move(id), OperatorKind::constant_shift, "base=" + base.id() + ":c=" + detail::format_param(c),
          base.fitted_on(), base.clip_bound(), std::make_shared<detail::ShiftOperator>(base, std::vector<double>{c})};
}

/// clip(base f + delta(s, a)).
inline BellmanOperatorCandidate make_perturbed(const BellmanOperatorCandidate& base, const SaFunction& delta,
                                               std::string id) {
  const auto v = delta.values();
  return {std::move(id), OperatorKind::perturbed, "base=" + base.id(), base.fitted_on(), base.clip_bound(),
          std::make_shared<detail::ShiftOperator>(base, std::vector<double>(v.begin(), v.end()))};
}

/// clip(b + M f) with M acting on the flattened pair vector.
inline BellmanOperatorCandidate make_affine_operator(std::size_t n_states, std::size_t n_actions, Eigen::MatrixXd m,
                                                     Eigen::VectorXd b, double clip_bound, std::string id) {
  const auto pairs = static_cast<Eigen::Index>(n_states * n_actions);
  if (m.rows() != pairs || m.cols() != pairs || b.size() != pairs)
    throw InvalidArgument("make_affine_operator: shape mismatch");
  return {std::move(id), OperatorKind::affine, "", "analytic", clip_bound,
          std::make_shared<detail::AffineOperator>(n_states, n_actions, std::move(m), std::move(b))};
}

/// X f = clip(q0) for every f.
inline BellmanOperatorCandidate make_constant_operator(const SaFunction& q0, double clip_bound, std::string id) {
  return {std::move(id), OperatorKind::constant, "", "analytic", clip_bound,
          std::make_shared<detail::ConstantOperator>(q0)};
}

// --- fitted Q-evaluation operators -------------------------------------------

struct TabularMeanSpec {};

struct RidgeSpec {
  double lambda = 1e-2;
  FeatureMap features;
};

struct KnnSpec {
  std::size_t k = 8;
  FeatureMap features;
};

using RegressorSpec = std::variant<TabularMeanSpec, RidgeSpec, KnnSpec>;

namespace detail {

/// Regression of per-record targets onto a function of (s, a). All state
/// that does not depend on the targets is computed once at fit time.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual SaFunction predict(std::span<const double> targets) const = 0;
};

class TabularMeanRegressor final : public Regressor {
 public:
  TabularMeanRegressor(const TransitionDataset& d) : ns_(d.n_states()), na_(d.n_actions()), pair_(d.size()) {
    count_.assign(ns_ * na_, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      pair_[i] = d.pair(i);
      count_[pair_[i]] += 1.0;
    }
  }

  /// Per-cell mean; cells without data get the global mean.
  SaFunction predict(std::span<const double> y) const override {
    std::vector<double> sum(count_.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      sum[pair_[i]] += y[i];
      total += y[i];
    }
    const double global = total / static_cast<double>(y.size());
    SaFunction out(ns_, na_);
    for (std::size_t p = 0; p < count_.size(); ++p) out[p] = count_[p] > 0.0 ? sum[p] / count_[p] : global;
    return out;
  }

 private:
  std::size_t ns_, na_;
  std::vector<std::size_t> pair_;
  std::vector<double> count_;
};

/// Ridge regression with an unpenalized intercept: minimizes
/// sum_i (y_i - b - phi_i^T w)^2 + lambda |w|^2. The factorization of the
/// centered Gram matrix is cached; only the right-hand side changes per call.
class RidgeRegressor final : public Regressor {
 public:
  RidgeRegressor(const TransitionDataset& d, const FeatureMap& features, double lambda)
      : ns_(d.n_states()), na_(d.n_actions()), pair_(d.size()) {
    if (!(lambda >= 0.0)) throw InvalidArgument("ridge: lambda must be nonnegative");
    const std::size_t pairs = ns_ * na_;
    const auto dim = static_cast<Eigen::Index>(features.dim());
    count_.assign(pairs, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      pair_[i] = d.pair(i);
      count_[pair_[i]] += 1.0;
    }
    const auto table = features.table();
    phi_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        table.data(), static_cast<Eigen::Index>(pairs), dim);
    const double n = static_cast<double>(d.size());
    mean_ = Eigen::VectorXd::Zero(dim);
    for (std::size_t p = 0; p < pairs; ++p) mean_ += count_[p] * phi_.row(static_cast<Eigen::Index>(p)).transpose();
    mean_ /= n;
    phi_.rowwise() -= mean_.transpose();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t p = 0; p < pairs; ++p) {
      if (count_[p] == 0.0) continue;
      const auto row = phi_.row(static_cast<Eigen::Index>(p));
      gram.noalias() += count_[p] * row.transpose() * row;
    }
    if (lambda == 0.0) {
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
      const auto ev = eig.eigenvalues();
      if (!(ev.minCoeff() > 1e-10 * std::max(ev.maxCoeff(), 1.0)))
        throw SingularSystem("ridge: normal equations are singular (use lambda > 0)");
    }
    gram.diagonal().array() += lambda;
    ldlt_.compute(gram);
    if (ldlt_.info() != Eigen::Success) throw SingularSystem("ridge: factorization failed");
  }

  SaFunction predict(std::span<const double> y) const override {
    const std::size_t pairs = ns_ * na_;
    std::vector<double> sum(pairs, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      sum[pair_[i]] += y[i];
      total += y[i];
    }
    const double ybar = total / static_cast<double>(y.size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(phi_.cols());
    for (std::size_t p = 0; p < pairs; ++p) {
      if (count_[p] == 0.0) continue;
      rhs += (sum[p] - count_[p] * ybar) * phi_.row(static_cast<Eigen::Index>(p)).transpose();
    }
    const Eigen::VectorXd w = ldlt_.solve(rhs);
    const Eigen::VectorXd pred = phi_ * w;
    SaFunction out(ns_, na_);
    for (std::size_t p = 0; p < pairs; ++p) out[p] = ybar + pred(static_cast<Eigen::Index>(p));
    return out;
  }

 private:
  std::size_t ns_, na_;
  std::vector<std::size_t> pair_;
  std::vector<double> count_;
  Eigen::MatrixXd phi_;  // centered embeddings, one row per pair
  Eigen::VectorXd mean_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

/// k-nearest-neighbour average in embedding space. Records at the boundary
/// distance share the remaining weight equally, so the fit does not depend
/// on record order. Neighbour weights are fixed at fit time per pair.
class KnnRegressor final : public Regressor {
 public:
  KnnRegressor(const TransitionDataset& d, const FeatureMap& features, std::size_t k)
      : ns_(d.n_states()), na_(d.n_actions()), pair_(d.size()) {
    if (k == 0) throw InvalidArgument("knn: k must be positive");
    k_ = std::min(k, d.size());
    const std::size_t pairs = ns_ * na_;
    std::vector<double> count(pairs, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      pair_[i] = d.pair(i);
      count[pair_[i]] += 1.0;
    }
    const auto table = features.table();
    const std::size_t dim = features.dim();
    auto dist2 = [&](std::size_t p, std::size_t q) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = table[p * dim + j] - table[q * dim + j];
        acc += diff * diff;
      }
      return acc;
    };
    weights_.resize(pairs);
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t p = 0; p < pairs; ++p) {
      order.clear();
      for (std::size_t q = 0; q < pairs; ++q)
        if (count[q] > 0.0) order.emplace_back(dist2(p, q), q);
      std::sort(order.begin(), order.end());
      double taken = 0.0;
      const auto kk = static_cast<double>(k_);
      for (std::size_t g = 0; g < order.size() && taken < kk;) {
        std::size_t end = g;
        double group = 0.0;
        while (end < order.size() && order[end].first == order[g].first) group += count[order[end++].second];
        const double w = taken + group <= kk ? 1.0 : (kk - taken) / group;
        for (std::size_t j = g; j < end; ++j) weights_[p].push_back({order[j].second, w});
        taken += w * group;
        g = end;
      }
    }
  }

  SaFunction predict(std::span<const double> y) const override {
    std::vector<double> sum(ns_ * na_, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) sum[pair_[i]] += y[i];
    SaFunction out(ns_, na_);
    for (std::size_t p = 0; p < ns_ * na_; ++p) {
      double acc = 0.0;
      for (const auto& [q, w] : weights_[p]) acc += w * sum[q];
      out[p] = acc / static_cast<double>(k_);
    }
    return out;
  }

 private:
  struct Neighbour {
    std::size_t pair;
    double weight;
  };
  std::size_t ns_, na_, k_ = 0;
  std::vector<std::size_t> pair_;
  std::vector<std::vector<Neighbour>> weights_;
};

class FqeOperator final : public OperatorImpl {
 public:
  FqeOperator(TransitionDataset train, Policy policy, TargetSpec targets, std::unique_ptr<Regressor> reg)
      : train_(std::move(train)), policy_(std::move(policy)), targets_(targets), reg_(std::move(reg)) {}

  SaFunction apply_raw(const QFunction& f) const override {
    const auto y = bellman_targets(f, train_, policy_, targets_);
    return reg_->predict(y);
  }

 private:
  TransitionDataset train_;
  Policy policy_;
  TargetSpec targets_;
  std::unique_ptr<Regressor> reg_;
};

}  // namespace detail

inline std::string describe(const RegressorSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, TabularMeanSpec>) {
          return "tabular_mean";
        } else if constexpr (std::is_same_v<T, RidgeSpec>) {
          return "lambda=" + detail::format_param(s.lambda) + ":features=" + s.features.name();
        } else {
          return "k=" + std::to_string(s.k) + ":features=" + s.features.name();
        }
      },
      spec);
}

/// The least-squares FQE operator over a regressor family:
/// f -> clip(argmin_g sum_D |r + gamma E_{a'~pi(s')} f(s', a') - g(s, a)|^2).
/// Feature maps are standardized on `train` before fitting.
inline BellmanOperatorCandidate fit_fqe_operator(const TransitionDataset& train, const Policy& policy,
                                                 const RegressorSpec& spec, const HorizonSpec& horizon,
                                                 std::string id, NextAction next_action = NextAction::expected) {
  if (policy.n_states() != train.n_states() || policy.n_actions() != train.n_actions())
    throw InvalidArgument("fit_fqe_operator: policy shape mismatch");
  const TargetSpec targets{horizon.gamma, next_action, train.seed()};
  std::unique_ptr<detail::Regressor> reg;
  OperatorKind kind = OperatorKind::tabular_mean;
  if (std::holds_alternative<TabularMeanSpec>(spec)) {
    reg = std::make_unique<detail::TabularMeanRegressor>(train);
  } else if (const auto* r = std::get_if<RidgeSpec>(&spec)) {
    kind = OperatorKind::fqe_ridge;
    reg = std::make_unique<detail::RidgeRegressor>(train, fit_feature_normalization(r->features, train), r->lambda);
  } else {
    const auto& k = std::get<KnnSpec>(spec);
    kind = OperatorKind::fqe_knn;
    reg = std::make_unique<detail::KnnRegressor>(train, fit_feature_normalization(k.features, train), k.k);
  }
  std::ostringstream fp;
  fp << std::hex << train.fingerprint();
  return {std::move(id), kind, describe(spec), "dataset:" + fp.str(), time_constant(horizon),
          std::make_shared<detail::FqeOperator>(train, policy, targets, std::move(reg))};
}

// ---------------------------------------------------------------------------
// Error oracles (need the tabular ground truth)
// ---------------------------------------------------------------------------

/// Bellman error Delta X f = X f - B_pi f, with B_pi the unclipped true operator.
inline SaFunction bellman_error(const BellmanOperatorCandidate& x, const QFunction& f, const TabularMdp& mdp,
                                const Policy& policy, double gamma) {
  SaFunction e = x.apply(f);
  const SaFunction b = bellman_affine(mdp, policy, gamma, f);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= b[i];
  return e;
}

inline double l2_norm(const SaFunction& g, std::span<const double> mu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) acc += mu[i] * g[i] * g[i];
  return std::sqrt(acc);
}

/// ||X f - B_pi f||_{L2(mu)}.
inline double bellman_error_l2(const BellmanOperatorCandidate& x, const QFunction& f, const TabularMdp& mdp,
                               const Policy& policy, const HorizonSpec& horizon, std::span<const double> mu) {
  return l2_norm(bellman_error(x, f, mdp, policy, horizon.gamma), mu);
}

/// Probe functions for operator norms: 0, the constant C, Q^pi, then uniform
/// random functions in [0, C]. The list for a larger count extends the list
/// for a smaller one.
inline std::vector<QFunction> probe_functions(const TabularMdp& mdp, const Policy& policy, const HorizonSpec& horizon,
                                              std::size_t count, std::uint64_t seed) {
  const double c = time_constant(horizon);
  std::vector<QFunction> probes;
  probes.reserve(count);
  if (count > 0) probes.emplace_back(mdp.n_states(), mdp.n_actions(), 0.0);
  if (count > 1) probes.emplace_back(mdp.n_states(), mdp.n_actions(), c);
  if (count > 2) probes.push_back(exact_q(mdp, policy, horizon));
  const auto base = CounterRng::stream(seed, "probe_functions");
  for (std::size_t k = 3; k < count; ++k) {
    auto rng = base.split(k);
    QFunction f(mdp.n_states(), mdp.n_actions());
    for (double& v : f.values()) v = rng.uniform(0.0, c);
    probes.push_back(std::move(f));
  }
  return probes;
}

/// Lower bound on sup_f ||Delta X f||_2 from a finite probe set.
inline double operator_error_sup(const BellmanOperatorCandidate& x, const TabularMdp& mdp, const Policy& policy,
                                 const HorizonSpec& horizon, std::span<const double> mu, std::size_t probe_count,
                                 std::uint64_t seed = 0) {
  if (probe_count == 0) throw InvalidArgument("operator_error_sup: probe_count must be >= 1");
  double best = 0.0;
  for (const auto& f : probe_functions(mdp, policy, horizon, probe_count, seed))
    best = std::max(best, bellman_error_l2(x, f, mdp, policy, horizon, mu));
  return best;
}

}  // namespace fqesel
