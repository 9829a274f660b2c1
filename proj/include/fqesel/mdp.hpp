#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fqesel/errors.hpp"

namespace fqesel {

inline constexpr double kProbabilityTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Horizon
// ---------------------------------------------------------------------------

/// Evaluation horizon and discount. `steps` is empty for the discounted
/// infinite-horizon setting, which requires gamma < 1.
struct HorizonSpec {
  std::optional<int> steps;
  double gamma = 1.0;

  static HorizonSpec finite(int h, double gamma) { return validated({h, gamma}); }
  static HorizonSpec infinite(double gamma) { return validated({std::nullopt, gamma}); }

  bool is_finite() const noexcept { return steps.has_value(); }

  int finite_steps() const {
    if (!steps) throw InvalidHorizon("operation requires a finite horizon");
    return *steps;
  }

  static HorizonSpec validated(HorizonSpec h) {
    if (!(h.gamma >= 0.0 && h.gamma <= 1.0))
      throw InvalidHorizon("gamma must lie in [0, 1], got " + std::to_string(h.gamma));
    if (h.steps && *h.steps < 1) throw InvalidHorizon("horizon must be positive");
    if (!h.steps && h.gamma >= 1.0)
      throw InvalidHorizon("infinite horizon requires gamma < 1");
    return h;
  }
};

/// C = sum_{h=1..H} gamma^{h-1}, or 1/(1-gamma) for the infinite horizon.
inline double time_constant(const HorizonSpec& horizon) {
  HorizonSpec::validated(horizon);
  const double g = horizon.gamma;
  if (!horizon.steps) return 1.0 / (1.0 - g);
  double c = 0.0;
  double pw = 1.0;
  for (int h = 0; h < *horizon.steps; ++h) {
    c += pw;
    pw *= g;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Functions on state-action pairs
// ---------------------------------------------------------------------------

/// A real value per (s, a), stored row-major with index s * n_actions + a.
/// Used for Q-functions, Bellman residuals and weight functions alike.
class SaFunction {
 public:
  SaFunction() = default;
  SaFunction(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
      : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}
  SaFunction(std::size_t n_states, std::size_t n_actions, std::vector<double> values)
      : n_states_(n_states), n_actions_(n_actions), values_(std::move(values)) {
    if (values_.size() != n_states_ * n_actions_)
      throw InvalidArgument("SaFunction: value count does not match shape");
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator()(std::size_t s, std::size_t a) const { return values_[s * n_actions_ + a]; }
  double& operator()(std::size_t s, std::size_t a) { return values_[s * n_actions_ + a]; }
  double operator[](std::size_t pair) const { return values_[pair]; }
  double& operator[](std::size_t pair) { return values_[pair]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool same_shape(const SaFunction& o) const noexcept {
    return n_states_ == o.n_states_ && n_actions_ == o.n_actions_;
  }

  bool within(double lo, double hi) const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [&](double v) { return v >= lo && v <= hi; });
  }

  friend bool operator==(const SaFunction&, const SaFunction&) = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> values_;
};

/// Q-functions are SaFunctions whose values lie in [0, C].
using QFunction = SaFunction;

inline double sup_distance(const SaFunction& a, const SaFunction& b) {
  if (!a.same_shape(b)) throw InvalidArgument("sup_distance: shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Elementwise max(0, min(C, f)).
inline QFunction clip_q(SaFunction f, double c) {
  if (!(c > 0.0)) throw InvalidArgument("clip_q: C must be positive");
  for (double& v : f.values()) v = std::clamp(v, 0.0, c);
  return f;
}

namespace detail {

inline void check_distribution(std::span<const double> p, const std::string& what) {
  if (p.empty()) throw InvalidArgument(what + ": empty probability vector");
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument(what + ": negative or non-finite entry");
    total += x;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance)
    throw InvalidArgument(what + ": probabilities sum to " + std::to_string(total));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

class Policy {
 public:
  Policy() = default;
  Policy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
      : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
    if (n_states_ == 0 || n_actions_ == 0) throw InvalidArgument("Policy: empty shape");
    if (probs_.size() != n_states_ * n_actions_) throw InvalidArgument("Policy: shape mismatch");
    for (std::size_t s = 0; s < n_states_; ++s)
      detail::check_distribution(row(s), "Policy row " + std::to_string(s));
  }

  static Policy uniform(std::size_t n_states, std::size_t n_actions) {
    return Policy(n_states, n_actions,
                  std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
  }

  static Policy deterministic(std::span<const std::size_t> actions, std::size_t n_actions) {
    std::vector<double> p(actions.size() * n_actions, 0.0);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] >= n_actions) throw InvalidArgument("Policy: action out of range");
      p[s * n_actions + actions[s]] = 1.0;
    }
    return Policy(actions.size(), n_actions, std::move(p));
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double prob(std::size_t s, std::size_t a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(std::size_t s) const {
    return std::span<const double>(probs_).subspan(s * n_actions_, n_actions_);
  }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> probs_;
};

/// eps * p1 + (1 - eps) * p2, row by row.
inline Policy mix_policies(const Policy& p1, const Policy& p2, double eps) {
  if (p1.n_states() != p2.n_states() || p1.n_actions() != p2.n_actions())
    throw InvalidArgument("mix_policies: shape mismatch");
  if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument("mix_policies: eps outside [0, 1]");
  if (eps == 1.0) return p1;
  if (eps == 0.0) return p2;
  std::vector<double> probs(p1.probs().size());
  for (std::size_t s = 0; s < p1.n_states(); ++s) {
    double row_sum = 0.0;
    for (std::size_t a = 0; a < p1.n_actions(); ++a) {
      const std::size_t i = s * p1.n_actions() + a;
      probs[i] = eps * p1.probs()[i] + (1.0 - eps) * p2.probs()[i];
      row_sum += probs[i];
    }
    for (std::size_t a = 0; a < p1.n_actions(); ++a) probs[s * p1.n_actions() + a] /= row_sum;
  }
  return Policy(p1.n_states(), p1.n_actions(), std::move(probs));
}

// ---------------------------------------------------------------------------
// Tabular MDP
// ---------------------------------------------------------------------------

/// Two-point reward law on {lo, hi} with mean `mean`; hi is drawn with p_hi.
struct RewardLaw {
  double lo = 0.0;
  double hi = 0.0;
  double p_hi = 0.0;
};

/// Reward law for mean m and spread sigma: support {max(0, m - sigma), min(1, m + sigma)}
/// with the weights chosen so that the mean stays m.
inline RewardLaw two_point_reward(double mean, double spread) {
  RewardLaw law{std::max(0.0, mean - spread), std::min(1.0, mean + spread), 0.0};
  if (law.hi > law.lo) {
    law.p_hi = (mean - law.lo) / (law.hi - law.lo);
  } else {
    law.lo = law.hi = mean;
  }
  return law;
}

/// Finite MDP (S1, T, R) with rewards supported in [0, 1].
class TabularMdp {
 public:
  TabularMdp() = default;

  /// `transition` holds one next-state distribution per (s, a), row-major.
  TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> initial,
             std::vector<double> transition, std::vector<double> reward_mean,
             std::vector<double> reward_spread)
      : n_states_(n_states),
        n_actions_(n_actions),
        initial_(std::move(initial)),
        transition_(std::move(transition)),
        reward_mean_(std::move(reward_mean)),
        reward_spread_(std::move(reward_spread)) {
    if (n_states_ == 0 || n_actions_ == 0) throw InvalidArgument("TabularMdp: empty shape");
    const std::size_t pairs = n_states_ * n_actions_;
    if (initial_.size() != n_states_) throw InvalidArgument("TabularMdp: initial_dist size");
    if (transition_.size() != pairs * n_states_) throw InvalidArgument("TabularMdp: transition size");
    if (reward_mean_.size() != pairs) throw InvalidArgument("TabularMdp: reward_mean size");
    if (reward_spread_.empty()) reward_spread_.assign(pairs, 0.0);
    if (reward_spread_.size() != pairs) throw InvalidArgument("TabularMdp: reward_noise size");
    detail::check_distribution(initial_, "initial_dist");
    for (std::size_t i = 0; i < pairs; ++i) {
      detail::check_distribution(next_state_probs(i), "transition row " + std::to_string(i));
      if (!(reward_mean_[i] >= 0.0 && reward_mean_[i] <= 1.0))
        throw InvalidArgument("reward_mean must lie in [0, 1]");
      if (!(reward_spread_[i] >= 0.0)) throw InvalidArgument("reward_noise must be nonnegative");
    }
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t n_pairs() const noexcept { return n_states_ * n_actions_; }
  std::size_t pair(std::size_t s, std::size_t a) const noexcept { return s * n_actions_ + a; }

  std::span<const double> initial_dist() const noexcept { return initial_; }
  std::span<const double> transition() const noexcept { return transition_; }
  std::span<const double> next_state_probs(std::size_t pair) const {
    return std::span<const double>(transition_).subspan(pair * n_states_, n_states_);
  }
  std::span<const double> next_state_probs(std::size_t s, std::size_t a) const {
    return next_state_probs(pair(s, a));
  }
  std::span<const double> reward_means() const noexcept { return reward_mean_; }
  std::span<const double> reward_spreads() const noexcept { return reward_spread_; }
  double reward_mean(std::size_t s, std::size_t a) const { return reward_mean_[pair(s, a)]; }
  RewardLaw reward_law(std::size_t pair) const {
    return two_point_reward(reward_mean_[pair], reward_spread_[pair]);
  }

  bool compatible(const Policy& p) const noexcept {
    return p.n_states() == n_states_ && p.n_actions() == n_actions_;
  }

  friend bool operator==(const TabularMdp&, const TabularMdp&) = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> initial_;
  std::vector<double> transition_;
  std::vector<double> reward_mean_;
  std::vector<double> reward_spread_;
};

// ---------------------------------------------------------------------------
// Exact operators
// ---------------------------------------------------------------------------

/// V_f(s) = sum_a pi(a|s) f(s, a).
inline std::vector<double> state_values(const Policy& policy, const SaFunction& f) {
  std::vector<double> v(policy.n_states(), 0.0);
  for (std::size_t s = 0; s < policy.n_states(); ++s)
    for (std::size_t a = 0; a < policy.n_actions(); ++a) v[s] += policy.prob(s, a) * f(s, a);
  return v;
}

/// The true Bellman operator without clipping: r(s,a) + gamma * E[V_f(s')].
/// It is affine, which the error identities rely on.
inline SaFunction bellman_affine(const TabularMdp& mdp, const Policy& policy, double gamma,
                                 const SaFunction& f) {
  if (!mdp.compatible(policy)) throw InvalidArgument("bellman_affine: policy shape mismatch");
  const auto v = state_values(policy, f);
  SaFunction out(mdp.n_states(), mdp.n_actions());
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    const auto next = mdp.next_state_probs(i);
    double cont = 0.0;
    for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2) cont += next[s2] * v[s2];
    out[i] = mdp.reward_means()[i] + gamma * cont;
  }
  return out;
}

/// B_pi f clipped to [0, C].
inline QFunction exact_bellman_apply(const TabularMdp& mdp, const Policy& policy,
                                     const HorizonSpec& horizon, const QFunction& f) {
  return clip_q(bellman_affine(mdp, policy, horizon.gamma, f), time_constant(horizon));
}

/// Q^pi by backward induction (finite horizon) or value iteration to a
/// 1e-12 sup-norm fixed point (infinite horizon).
inline QFunction exact_q(const TabularMdp& mdp, const Policy& policy, const HorizonSpec& horizon) {
  const double c = time_constant(horizon);
  QFunction q(mdp.n_states(), mdp.n_actions());
  if (horizon.is_finite()) {
    for (int h = 0; h < *horizon.steps; ++h) q = exact_bellman_apply(mdp, policy, horizon, q);
    return q;
  }
  const auto cap = static_cast<long>(std::ceil(10.0 * c * std::log(c / 1e-12))) + 1;
  for (long it = 0; it < cap; ++it) {
    QFunction next = exact_bellman_apply(mdp, policy, horizon, q);
    const double change = sup_distance(next, q);
    q = std::move(next);
    if (change < 1e-12) return q;
  }
  throw ConvergenceError("exact_q: value iteration did not converge within " +
                         std::to_string(cap) + " iterations");
}

/// J(q) = E_{s ~ S1, a ~ pi(s)} q(s, a).
inline double policy_value(const TabularMdp& mdp, const Policy& policy, const SaFunction& q) {
  const auto v = state_values(policy, q);
  double j = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) j += mdp.initial_dist()[s] * v[s];
  return j;
}

/// OPE error J(q) - J(pi).
inline double value_error(const TabularMdp& mdp, const Policy& policy, const HorizonSpec& horizon,
                          const SaFunction& q) {
  return policy_value(mdp, policy, q) - policy_value(mdp, policy, exact_q(mdp, policy, horizon));
}

// ---------------------------------------------------------------------------
// Occupancy
// ---------------------------------------------------------------------------

struct OccupancyProfile {
  /// P_h over pairs for h = 1..H (truncated for the infinite horizon).
  std::vector<std::vector<double>> per_step_marginals;
  /// nu = (1/C) sum_h gamma^{h-1} P_h.
  std::vector<double> discounted_average;
  std::vector<std::vector<double>> weights_per_step;
  std::vector<double> weight_avg;
  std::vector<double> weight_l2_norms;
  double weight_avg_l2_norm = 0.0;

  std::size_t steps() const noexcept { return per_step_marginals.size(); }
  double max_step_weight_norm() const {
    return weight_l2_norms.empty() ? 0.0
                                   : *std::max_element(weight_l2_norms.begin(), weight_l2_norms.end());
  }
};

/// Product distribution S1 x pi over pairs.
inline std::vector<double> initial_pair_dist(const TabularMdp& mdp, const Policy& policy) {
  std::vector<double> p(mdp.n_pairs());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      p[mdp.pair(s, a)] = mdp.initial_dist()[s] * policy.prob(s, a);
  return p;
}

/// One step of forward propagation of a pair marginal through T and pi.
inline std::vector<double> propagate_pairs(const TabularMdp& mdp, const Policy& policy,
                                           std::span<const double> marginal) {
  std::vector<double> next_state(mdp.n_states(), 0.0);
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    if (marginal[i] == 0.0) continue;
    const auto t = mdp.next_state_probs(i);
    for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2) next_state[s2] += marginal[i] * t[s2];
  }
  std::vector<double> out(mdp.n_pairs(), 0.0);
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      out[mdp.pair(s, a)] = next_state[s] * policy.prob(s, a);
  return out;
}

/// Number of explicit steps kept for the infinite horizon: smallest H_t
/// with gamma^{H_t} < 1e-10.
inline int occupancy_truncation(double gamma) {
  if (gamma <= 0.0) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(1e-10) / std::log(gamma))) + 1);
}

namespace detail {

/// Exact discounted occupancy for gamma < 1: solves nu (I - gamma M) = (1 - gamma) P_1,
/// with M the pair-to-pair propagation matrix.
inline std::vector<double> discounted_occupancy_exact(const TabularMdp& mdp, const Policy& policy,
                                                      double gamma) {
  const auto n = static_cast<Eigen::Index>(mdp.n_pairs());
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    const auto t = mdp.next_state_probs(i);
    for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2)
      for (std::size_t a2 = 0; a2 < mdp.n_actions(); ++a2)
        system(static_cast<Eigen::Index>(mdp.pair(s2, a2)), static_cast<Eigen::Index>(i)) -=
            gamma * t[s2] * policy.prob(s2, a2);
  }
  const auto p1 = initial_pair_dist(mdp, policy);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) rhs(i) = (1.0 - gamma) * p1[static_cast<std::size_t>(i)];
  const Eigen::VectorXd nu = system.partialPivLu().solve(rhs);
  std::vector<double> out(mdp.n_pairs());
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::max(0.0, nu(i));
  return out;
}

inline std::vector<double> density_ratio(std::span<const double> p, std::span<const double> mu,
                                         const TabularMdp& mdp, std::size_t step) {
  std::vector<double> w(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0 && mu[i] <= 0.0)
      throw AssumptionViolation(step, i / mdp.n_actions(), i % mdp.n_actions());
    w[i] = mu[i] > 0.0 ? p[i] / mu[i] : 0.0;
  }
  return w;
}

inline double weighted_l2(std::span<const double> w, std::span<const double> mu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += mu[i] * w[i] * w[i];
  return std::sqrt(acc);
}

}  // namespace detail

/// Per-step marginals P_h of (s_h, a_h) under pi, their discounted average nu
/// and the density ratios w_h = P_h / mu, w = nu / mu.
///
/// For gamma = 1 the average is (1/H) sum_h P_h. For the infinite horizon the
/// per-step list is truncated at H_t (tail mass below 1e-10) while nu itself
/// is solved exactly from the discounted flow equation.
inline OccupancyProfile occupancy_profile(const TabularMdp& mdp, const Policy& policy,
                                          const HorizonSpec& horizon, std::span<const double> mu) {
  if (!mdp.compatible(policy)) throw InvalidArgument("occupancy_profile: policy shape mismatch");
  if (mu.size() != mdp.n_pairs()) throw InvalidArgument("occupancy_profile: mu size mismatch");
  detail::check_distribution(mu, "mu");
  const double c = time_constant(horizon);
  const int steps = horizon.is_finite() ? *horizon.steps : occupancy_truncation(horizon.gamma);

  OccupancyProfile prof;
  prof.per_step_marginals.reserve(static_cast<std::size_t>(steps));
  auto p = initial_pair_dist(mdp, policy);
  std::vector<double> avg(mdp.n_pairs(), 0.0);
  double pw = 1.0;
  for (int h = 1; h <= steps; ++h) {
    if (h > 1) p = propagate_pairs(mdp, policy, prof.per_step_marginals.back());
    for (std::size_t i = 0; i < p.size(); ++i) avg[i] += pw * p[i];
    pw *= horizon.gamma;
    prof.per_step_marginals.push_back(p);
  }
  if (horizon.is_finite()) {
    for (double& x : avg) x /= c;
  } else {
    avg = detail::discounted_occupancy_exact(mdp, policy, horizon.gamma);
  }
  prof.discounted_average = std::move(avg);

  for (std::size_t h = 0; h < prof.per_step_marginals.size(); ++h) {
    prof.weights_per_step.push_back(detail::density_ratio(prof.per_step_marginals[h], mu, mdp, h + 1));
    prof.weight_l2_norms.push_back(detail::weighted_l2(prof.weights_per_step.back(), mu));
  }
  prof.weight_avg = detail::density_ratio(prof.discounted_average, mu, mdp, 0);
  prof.weight_avg_l2_norm = detail::weighted_l2(prof.weight_avg, mu);
  return prof;
}

inline double expectation(std::span<const double> dist, const SaFunction& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) acc += dist[i] * f[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Expert policy
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> greedy_actions(const SaFunction& q) {
  std::vector<std::size_t> act(q.n_states(), 0);
  for (std::size_t s = 0; s < q.n_states(); ++s) {
    double best = q(s, 0);
    for (std::size_t a = 1; a < q.n_actions(); ++a) {
      if (q(s, a) > best + 1e-12) {
        best = q(s, a);
        act[s] = a;
      }
    }
  }
  return act;
}

inline SaFunction optimal_backup(const TabularMdp& mdp, double gamma, const SaFunction& q) {
  std::vector<double> v(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double best = q(s, 0);
    for (std::size_t a = 1; a < mdp.n_actions(); ++a) best = std::max(best, q(s, a));
    v[s] = best;
  }
  SaFunction out(mdp.n_states(), mdp.n_actions());
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    const auto t = mdp.next_state_probs(i);
    double cont = 0.0;
    for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2) cont += t[s2] * v[s2];
    out[i] = mdp.reward_means()[i] + gamma * cont;
  }
  return out;
}

}  // namespace detail

/// Optimal action values Q*_H (finite) or Q* (infinite) by value iteration.
inline SaFunction optimal_q(const TabularMdp& mdp, const HorizonSpec& horizon) {
  SaFunction q(mdp.n_states(), mdp.n_actions());
  if (horizon.is_finite()) {
    for (int h = 0; h < *horizon.steps; ++h) q = detail::optimal_backup(mdp, horizon.gamma, q);
    return q;
  }
  const double c = time_constant(horizon);
  const auto cap = static_cast<long>(std::ceil(10.0 * c * std::log(c / 1e-12))) + 1;
  for (long it = 0; it < cap; ++it) {
    auto next = detail::optimal_backup(mdp, horizon.gamma, q);
    const double change = sup_distance(next, q);
    q = std::move(next);
    if (change < 1e-12) return q;
  }
  throw ConvergenceError("optimal_q: value iteration did not converge");
}

/// Deterministic policy greedy w.r.t. the optimal action values; ties go to
/// the lowest action index.
inline Policy greedy_expert(const TabularMdp& mdp, const HorizonSpec& horizon) {
  const auto acts = detail::greedy_actions(optimal_q(mdp, horizon));
  return Policy::deterministic(acts, mdp.n_actions());
}

}  // namespace fqesel
