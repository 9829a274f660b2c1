#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fqesel/dataset.hpp"
#include "fqesel/errors.hpp"
#include "fqesel/kernel.hpp"
#include "fqesel/mdp.hpp"
#include "fqesel/operators.hpp"
#include "fqesel/parallel.hpp"

namespace fqesel {

// ---------------------------------------------------------------------------
// Meta-FQE drivers
// ---------------------------------------------------------------------------

/// Iterates of one candidate. `iterates[h]` is Q_h with Q_0 = 0. In
/// fixed-point mode `averages[h - 1]` is the running mean of Q_1..Q_h and
/// `terminal` is the returned estimate; otherwise `terminal` is Q_H.
struct QFunctionSeq {
  std::vector<QFunction> iterates;
  std::vector<QFunction> averages;
  QFunction terminal;
  bool fixed_point = false;
  std::optional<int> early_exit_step;

  std::size_t steps() const noexcept { return iterates.empty() ? 0 : iterates.size() - 1; }
};

/// Q_h = X Q_{h-1} for h = 1..H.
inline QFunctionSeq meta_fqe(const BellmanOperatorCandidate& x, const HorizonSpec& horizon, std::size_t n_states,
                             std::size_t n_actions) {
  HorizonSpec::validated(horizon);
  if (!horizon.is_finite()) throw InvalidHorizon("meta_fqe requires a finite horizon");
  const auto h_max = static_cast<std::size_t>(*horizon.steps);
  QFunctionSeq seq;
  seq.iterates.reserve(h_max + 1);
  seq.iterates.emplace_back(n_states, n_actions, 0.0);
  for (std::size_t h = 1; h <= h_max; ++h) seq.iterates.push_back(x.apply(seq.iterates[h - 1]));
  seq.terminal = seq.iterates.back();
  return seq;
}

inline QFunctionSeq meta_fqe(const BellmanOperatorCandidate& x, const HorizonSpec& horizon,
                             const TransitionDataset& d) {
  return meta_fqe(x, horizon, d.n_states(), d.n_actions());
}

struct FixedPointConfig {
  int h_star = 1;
  double fp_tolerance = 1e-12;

  /// H* = ceil(n^{1/4}) for a validation set of size n.
  static FixedPointConfig for_sample_size(std::size_t n) {
    if (n == 0) throw InvalidArgument("FixedPointConfig: sample size must be positive");
    const int h = static_cast<int>(std::ceil(std::pow(static_cast<double>(n), 0.25) - 1e-12));
    return {std::max(1, h), 1e-12};
  }
};

/// Runs Q_h = X Q_{h-1} for h = 1..H* and returns the running average of the
/// iterates. Stops early, returning Q_h itself, once sup|Q_h - Q_{h-1}| is
/// within the tolerance.
inline QFunctionSeq meta_fqe_fp(const BellmanOperatorCandidate& x, std::size_t n_states, std::size_t n_actions,
                                const FixedPointConfig& cfg) {
  if (cfg.h_star < 1) throw InvalidArgument("meta_fqe_fp: h_star must be >= 1");
  if (!(cfg.fp_tolerance >= 0.0)) throw InvalidArgument("meta_fqe_fp: fp_tolerance must be >= 0");
  QFunctionSeq seq;
  seq.fixed_point = true;
  seq.iterates.emplace_back(n_states, n_actions, 0.0);
  QFunction avg(n_states, n_actions, 0.0);
  for (int h = 1; h <= cfg.h_star; ++h) {
    QFunction q = x.apply(seq.iterates.back());
    const bool settled = sup_distance(q, seq.iterates.back()) <= cfg.fp_tolerance;
    const double inv = 1.0 / h;
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = (1.0 - inv) * avg[i] + inv * q[i];
    seq.iterates.push_back(std::move(q));
    seq.averages.push_back(avg);
    if (settled) {
      seq.early_exit_step = h;
      seq.terminal = seq.iterates.back();
      return seq;
    }
  }
  seq.terminal = std::move(avg);
  return seq;
}

inline QFunctionSeq meta_fqe_fp(const BellmanOperatorCandidate& x, const TransitionDataset& d,
                                const FixedPointConfig& cfg) {
  return meta_fqe_fp(x, d.n_states(), d.n_actions(), cfg);
}

// ---------------------------------------------------------------------------
// Empirical losses
// ---------------------------------------------------------------------------

inline TargetSpec default_targets(const HorizonSpec& horizon, const TransitionDataset& d,
                                  NextAction next_action = NextAction::expected) {
  return {horizon.gamma, next_action, d.seed()};
}

namespace detail {

inline double mean_square(std::span<const double> e) {
  double acc = 0.0;
  for (double v : e) acc += v * v;
  return acc / static_cast<double>(e.size());
}

inline double discounted_sqrt_sum(std::span<const double> per_step, double gamma, double c) {
  // per_step[h - 1] holds the step-h quantity; weight gamma^{H-h}.
  double acc = 0.0;
  double pw = 1.0;
  for (std::size_t k = per_step.size(); k-- > 0;) {
    acc += pw * std::sqrt(std::max(0.0, per_step[k]));
    pw *= gamma;
  }
  return acc / c;
}

}  // namespace detail

/// (1/n) sum_i (r_i + gamma V_f(s'_i) - X f(s_i, a_i))^2.
inline double squared_bellman_loss(const BellmanOperatorCandidate& x, const QFunction& f, const TransitionDataset& d,
                                   const Policy& policy, const TargetSpec& targets) {
  return detail::mean_square(bellman_residuals(x.apply(f), f, d, policy, targets));
}

/// Same loss with the identity in place of X: residuals r + gamma V_f(s') - f(s, a).
inline double identity_bellman_loss(const QFunction& f, const TransitionDataset& d, const Policy& policy,
                                    const TargetSpec& targets) {
  return detail::mean_square(bellman_residuals(f, f, d, policy, targets));
}

/// L(X; f) - min_{A in cset} L(A; f). X must be a member of cset.
inline double bellman_regret(const BellmanOperatorCandidate& x, const CandidateSet& cset, const QFunction& f,
                             const TransitionDataset& d, const Policy& policy, const TargetSpec& targets) {
  const std::size_t xi = cset.index_of(x.id());
  const auto y = bellman_targets(f, d, policy, targets);
  double own = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < cset.size(); ++a) {
    const QFunction af = cset[a].apply(f);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double e = y[i] - af[d.pair(i)];
      acc += e * e;
    }
    const double loss = acc / static_cast<double>(d.size());
    if (a == xi) own = loss;
    best = std::min(best, loss);
  }
  return own - best;
}

/// (1/C) sum_{h=1..H} gamma^{H-h} sqrt(Regret(X; Q^X_{h-1})).
inline double total_regret(const BellmanOperatorCandidate& x, const CandidateSet& cset, const QFunctionSeq& seq,
                           const HorizonSpec& horizon, const TransitionDataset& d, const Policy& policy,
                           const TargetSpec& targets) {
  std::vector<double> per_step;
  for (std::size_t h = 1; h <= seq.steps(); ++h)
    per_step.push_back(bellman_regret(x, cset, seq.iterates[h - 1], d, policy, targets));
  return detail::discounted_sqrt_sum(per_step, horizon.gamma, time_constant(horizon));
}

/// (1/C) sum_{h=1..H} gamma^{H-h} sqrt(max(0, KBL(X; Q^X_{h-1}))).
inline double total_kernel_loss(const BellmanOperatorCandidate& /*x*/, const Kernel& k, const QFunctionSeq& seq,
                                const HorizonSpec& horizon, const TransitionDataset& d, const Policy& policy,
                                const TargetSpec& targets) {
  std::vector<double> per_step;
  for (std::size_t h = 1; h <= seq.steps(); ++h) {
    const auto e = bellman_residuals(seq.iterates[h], seq.iterates[h - 1], d, policy, targets);
    per_step.push_back(kernel_v_statistic(k, d, e));
  }
  return detail::discounted_sqrt_sum(per_step, horizon.gamma, time_constant(horizon));
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

enum class Method { rm, klm, rm_fp, klm_fp };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::rm: return "rm";
    case Method::klm: return "klm";
    case Method::rm_fp: return "rm_fp";
    case Method::klm_fp: return "klm_fp";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "rm") return Method::rm;
  if (s == "klm") return Method::klm;
  if (s == "rm_fp") return Method::rm_fp;
  if (s == "klm_fp") return Method::klm_fp;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

inline bool uses_kernel(Method m) { return m == Method::klm || m == Method::klm_fp; }
inline bool uses_fixed_point(Method m) { return m == Method::rm_fp || m == Method::klm_fp; }

/// Index of the smallest score; ties go to the lowest index.
inline std::size_t argmin_index(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("argmin_index: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] < scores[best]) best = i;
  return best;
}

struct OracleSummary {
  double delta_j = 0.0;
  std::vector<double> abs_delta_j_all;
  double excess_mae = 0.0;
  double bound_value = 0.0;
  double suboptimality_proxy = 0.0;
};

struct SelectionReport {
  Method method = Method::rm;
  std::optional<KernelSpec> kernel;
  std::vector<std::string> candidate_ids;
  std::vector<double> scores;
  std::size_t selected_index = 0;
  std::string selected_id;
  QFunction q_hat;
  std::vector<QFunctionSeq> sequences;
  std::optional<FixedPointConfig> fixed_point;
  std::optional<OracleSummary> oracle;
};

/// Holds the validation data and caches per-candidate iterates so that
/// several methods scored in one run share the Meta-FQE work.
class SelectionSession {
 public:
  SelectionSession(const CandidateSet& cset, const TransitionDataset& valid, const Policy& policy,
                   const HorizonSpec& horizon, NextAction next_action = NextAction::expected, unsigned workers = 1)
      : cset_(cset),
        valid_(valid),
        policy_(policy),
        horizon_(HorizonSpec::validated(horizon)),
        targets_(default_targets(horizon, valid, next_action)),
        workers_(workers) {
    if (policy.n_states() != valid.n_states() || policy.n_actions() != valid.n_actions())
      throw InvalidArgument("SelectionSession: policy shape mismatch");
  }

  const CandidateSet& candidates() const noexcept { return cset_; }
  const TransitionDataset& data() const noexcept { return valid_; }
  const HorizonSpec& horizon() const noexcept { return horizon_; }
  const TargetSpec& targets() const noexcept { return targets_; }

  const std::vector<QFunctionSeq>& sequences() {
    if (!horizon_.is_finite()) throw InvalidHorizon("finite-horizon selection needs a finite horizon");
    if (seqs_.empty()) {
      std::vector<QFunctionSeq> out(cset_.size());
      parallel_for(cset_.size(), workers_, [&](std::size_t i) { out[i] = meta_fqe(cset_[i], horizon_, valid_); });
      seqs_ = std::move(out);
    }
    return seqs_;
  }

  const std::vector<QFunctionSeq>& fp_sequences(const FixedPointConfig& cfg) {
    if (horizon_.is_finite()) throw InvalidHorizon("fixed-point selection needs an infinite horizon");
    if (fp_seqs_.empty() || fp_cfg_.h_star != cfg.h_star || fp_cfg_.fp_tolerance != cfg.fp_tolerance) {
      std::vector<QFunctionSeq> out(cset_.size());
      parallel_for(cset_.size(), workers_, [&](std::size_t i) { out[i] = meta_fqe_fp(cset_[i], valid_, cfg); });
      fp_seqs_ = std::move(out);
      fp_cfg_ = cfg;
    }
    return fp_seqs_;
  }

  std::vector<double> total_regrets() {
    const auto& seqs = sequences();
    if (regret_scores_.empty()) {
      std::vector<double> out(cset_.size());
      parallel_for(cset_.size(), workers_, [&](std::size_t i) {
        out[i] = total_regret(cset_[i], cset_, seqs[i], horizon_, valid_, policy_, targets_);
      });
      regret_scores_ = std::move(out);
    }
    return regret_scores_;
  }

  std::vector<double> total_kernel_losses(const Kernel& k) {
    const auto& seqs = sequences();
    std::vector<double> out(cset_.size());
    parallel_for(cset_.size(), workers_, [&](std::size_t i) {
      out[i] = total_kernel_loss(cset_[i], k, seqs[i], horizon_, valid_, policy_, targets_);
    });
    return out;
  }

  /// L(Id; Qbar^X) - min_A L(Id; Qbar^A).
  std::vector<double> fp_regrets(const FixedPointConfig& cfg) {
    const auto& seqs = fp_sequences(cfg);
    std::vector<double> loss(cset_.size());
    parallel_for(cset_.size(), workers_, [&](std::size_t i) {
      loss[i] = identity_bellman_loss(seqs[i].terminal, valid_, policy_, targets_);
    });
    const double best = *std::min_element(loss.begin(), loss.end());
    for (double& v : loss) v -= best;
    return loss;
  }

  /// KBL(Id; Qbar^X).
  std::vector<double> fp_kernel_losses(const Kernel& k, const FixedPointConfig& cfg) {
    const auto& seqs = fp_sequences(cfg);
    std::vector<double> out(cset_.size());
    parallel_for(cset_.size(), workers_, [&](std::size_t i) {
      const auto e = bellman_residuals(seqs[i].terminal, seqs[i].terminal, valid_, policy_, targets_);
      out[i] = std::max(0.0, kernel_v_statistic(k, valid_, e));
    });
    return out;
  }

  SelectionReport select(Method method, const Kernel* kernel = nullptr,
                         std::optional<FixedPointConfig> cfg = std::nullopt) {
    if (uses_kernel(method) && kernel == nullptr) throw InvalidArgument(to_string(method) + " requires a kernel");
    SelectionReport rep;
    rep.method = method;
    if (uses_kernel(method)) rep.kernel = kernel->spec();
    for (const auto& c : cset_) rep.candidate_ids.push_back(c.id());
    if (uses_fixed_point(method)) {
      const auto fp = cfg.value_or(FixedPointConfig::for_sample_size(valid_.size()));
      rep.fixed_point = fp;
      rep.scores = method == Method::rm_fp ? fp_regrets(fp) : fp_kernel_losses(*kernel, fp);
      rep.sequences = fp_sequences(fp);
    } else {
      rep.scores = method == Method::rm ? total_regrets() : total_kernel_losses(*kernel);
      rep.sequences = sequences();
    }
    rep.selected_index = argmin_index(rep.scores);
    rep.selected_id = rep.candidate_ids[rep.selected_index];
    rep.q_hat = rep.sequences[rep.selected_index].terminal;
    return rep;
  }

 private:
  const CandidateSet& cset_;
  const TransitionDataset& valid_;
  const Policy& policy_;
  HorizonSpec horizon_;
  TargetSpec targets_;
  unsigned workers_;
  std::vector<QFunctionSeq> seqs_;
  std::vector<QFunctionSeq> fp_seqs_;
  FixedPointConfig fp_cfg_;
  std::vector<double> regret_scores_;
};

inline SelectionReport select_rm(const CandidateSet& cset, const HorizonSpec& horizon, const TransitionDataset& d,
                                 const Policy& policy) {
  return SelectionSession(cset, d, policy, horizon).select(Method::rm);
}

inline SelectionReport select_klm(const CandidateSet& cset, const Kernel& k, const HorizonSpec& horizon,
                                  const TransitionDataset& d, const Policy& policy) {
  return SelectionSession(cset, d, policy, horizon).select(Method::klm, &k);
}

inline SelectionReport select_rm_fp(const CandidateSet& cset, const HorizonSpec& horizon, const TransitionDataset& d,
                                    const Policy& policy, std::optional<FixedPointConfig> cfg = std::nullopt) {
  return SelectionSession(cset, d, policy, horizon).select(Method::rm_fp, nullptr, cfg);
}

inline SelectionReport select_klm_fp(const CandidateSet& cset, const Kernel& k, const HorizonSpec& horizon,
                                     const TransitionDataset& d, const Policy& policy,
                                     std::optional<FixedPointConfig> cfg = std::nullopt) {
  return SelectionSession(cset, d, policy, horizon).select(Method::klm_fp, &k, cfg);
}

// ---------------------------------------------------------------------------
// Ground-truth quantities
// ---------------------------------------------------------------------------

/// sum_{h=1..H} gamma^{h-1} E_{P_h}[Delta X Q_{H-h}], which equals
/// J(Q_H) - J(pi) when no clipping is active.
inline double telescoped_value_error(const BellmanOperatorCandidate& x, const QFunctionSeq& seq,
                                     const TabularMdp& mdp, const Policy& policy, const HorizonSpec& horizon) {
  const std::size_t h_max = seq.steps();
  auto p = initial_pair_dist(mdp, policy);
  double acc = 0.0;
  double pw = 1.0;
  for (std::size_t h = 1; h <= h_max; ++h) {
    if (h > 1) p = propagate_pairs(mdp, policy, p);
    acc += pw * expectation(p, bellman_error(x, seq.iterates[h_max - h], mdp, policy, horizon.gamma));
    pw *= horizon.gamma;
  }
  return acc;
}

/// C * E_nu[q - B_pi q] for gamma < 1, equal to J(q) - J(pi).
inline double fixed_point_value_error(const QFunction& q, const TabularMdp& mdp, const Policy& policy,
                                      const HorizonSpec& horizon, const OccupancyProfile& occ) {
  const auto b = bellman_affine(mdp, policy, horizon.gamma, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += occ.discounted_average[i] * (q[i] - b[i]);
  return time_constant(horizon) * acc;
}

/// (1/C) sum_{h=1..H} gamma^{H-h} ||Delta X Q_{h-1}||_{L2(mu)}.
inline double precriterion_l2(const BellmanOperatorCandidate& x, const QFunctionSeq& seq, const TabularMdp& mdp,
                              const Policy& policy, const HorizonSpec& horizon, std::span<const double> mu) {
  std::vector<double> sq;
  for (std::size_t h = 1; h <= seq.steps(); ++h) {
    const double n = l2_norm(bellman_error(x, seq.iterates[h - 1], mdp, policy, horizon.gamma), mu);
    sq.push_back(n * n);
  }
  return detail::discounted_sqrt_sum(sq, horizon.gamma, time_constant(horizon));
}

/// Same with the kernel dual norm in place of L2(mu).
inline double precriterion_kernel(const BellmanOperatorCandidate& x, const Kernel& k, const QFunctionSeq& seq,
                                  const TabularMdp& mdp, const Policy& policy, const HorizonSpec& horizon,
                                  std::span<const double> mu) {
  std::vector<double> sq;
  for (std::size_t h = 1; h <= seq.steps(); ++h) {
    const double n = dual_norm_exact(k, bellman_error(x, seq.iterates[h - 1], mdp, policy, horizon.gamma), mu);
    sq.push_back(n * n);
  }
  return detail::discounted_sqrt_sum(sq, horizon.gamma, time_constant(horizon));
}

/// C * max_h ||w_h||_{L2(mu)} * precriterion; bounds |J(Q_H) - J(pi)|.
inline double master_bound_l2(const BellmanOperatorCandidate& x, const QFunctionSeq& seq, const TabularMdp& mdp,
                              const Policy& policy, const HorizonSpec& horizon, std::span<const double> mu,
                              const OccupancyProfile& occ) {
  return time_constant(horizon) * occ.max_step_weight_norm() * precriterion_l2(x, seq, mdp, policy, horizon, mu);
}

/// Largest RKHS norm (minimum-norm interpolant) of the per-step weights.
inline double max_step_weight_rkhs_norm(const Kernel& k, const OccupancyProfile& occ) {
  double best = 0.0;
  for (const auto& w : occ.weights_per_step) best = std::max(best, rkhs_norm_interpolant(k, w));
  return best;
}

/// C * max_h ||w_h||_F * kernel precriterion.
inline double master_bound_kernel(const BellmanOperatorCandidate& x, const Kernel& k, const QFunctionSeq& seq,
                                  const TabularMdp& mdp, const Policy& policy, const HorizonSpec& horizon,
                                  std::span<const double> mu, const OccupancyProfile& occ) {
  const double pre = precriterion_kernel(x, k, seq, mdp, policy, horizon, mu);
  if (pre == 0.0) return 0.0;
  return time_constant(horizon) * max_step_weight_rkhs_norm(k, occ) * pre;
}

/// C * ||w||_{L2(mu)} * ||q - B_pi q||_{L2(mu)}.
inline double fixed_point_bound_l2(const QFunction& q, const TabularMdp& mdp, const Policy& policy,
                                   const HorizonSpec& horizon, std::span<const double> mu,
                                   const OccupancyProfile& occ) {
  const auto b = bellman_affine(mdp, policy, horizon.gamma, q);
  SaFunction e = q;
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= b[i];
  return time_constant(horizon) * occ.weight_avg_l2_norm * l2_norm(e, mu);
}

/// C * ||w||_F * ||q - B_pi q||_{F*}.
inline double fixed_point_bound_kernel(const QFunction& q, const Kernel& k, const TabularMdp& mdp,
                                       const Policy& policy, const HorizonSpec& horizon, std::span<const double> mu,
                                       const OccupancyProfile& occ) {
  const auto b = bellman_affine(mdp, policy, horizon.gamma, q);
  SaFunction e = q;
  for (std::size_t i = 0; i < e.size(); ++i) e[i] -= b[i];
  const double dn = dual_norm_exact(k, e, mu);
  if (dn == 0.0) return 0.0;
  return time_constant(horizon) * rkhs_norm_interpolant(k, occ.weight_avg) * dn;
}

/// Tabular ground truth used to attach oracle fields to a report.
struct GroundTruth {
  const TabularMdp& mdp;
  const Policy& policy;
  HorizonSpec horizon;
  std::span<const double> mu;
  std::size_t probe_count = 8;
  std::uint64_t probe_seed = 0;
};

/// Fills report.oracle. `kernel` is needed for the kernel bounds of KLM and KLM-FP.
inline void attach_oracle(SelectionReport& rep, const CandidateSet& cset, const GroundTruth& gt,
                          const Kernel* kernel = nullptr) {
  if (rep.sequences.size() != cset.size()) throw InvalidArgument("attach_oracle: report does not match cset");
  const auto occ = occupancy_profile(gt.mdp, gt.policy, gt.horizon, gt.mu);
  const double j_pi = policy_value(gt.mdp, gt.policy, exact_q(gt.mdp, gt.policy, gt.horizon));
  const double c = time_constant(gt.horizon);

  OracleSummary o;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : rep.sequences) {
    const double dj = std::abs(policy_value(gt.mdp, gt.policy, s.terminal) - j_pi);
    o.abs_delta_j_all.push_back(dj);
    best = std::min(best, dj);
  }
  o.delta_j = policy_value(gt.mdp, gt.policy, rep.q_hat) - j_pi;
  o.excess_mae = std::abs(o.delta_j) - best;

  const auto& x = cset[rep.selected_index];
  const auto& seq = rep.sequences[rep.selected_index];
  switch (rep.method) {
    case Method::rm: o.bound_value = master_bound_l2(x, seq, gt.mdp, gt.policy, gt.horizon, gt.mu, occ); break;
    case Method::rm_fp:
      o.bound_value = fixed_point_bound_l2(rep.q_hat, gt.mdp, gt.policy, gt.horizon, gt.mu, occ);
      break;
    case Method::klm:
      if (kernel == nullptr) throw InvalidArgument("attach_oracle: klm bound needs the kernel");
      o.bound_value = master_bound_kernel(x, *kernel, seq, gt.mdp, gt.policy, gt.horizon, gt.mu, occ);
      break;
    case Method::klm_fp:
      if (kernel == nullptr) throw InvalidArgument("attach_oracle: klm_fp bound needs the kernel");
      o.bound_value = fixed_point_bound_kernel(rep.q_hat, *kernel, gt.mdp, gt.policy, gt.horizon, gt.mu, occ);
      break;
  }

  const double d = gt.horizon.is_finite() ? occ.max_step_weight_norm() : occ.weight_avg_l2_norm;
  double floor = std::numeric_limits<double>::infinity();
  for (const auto& cand : cset)
    floor = std::min(floor, 3.0 * c * d *
                                operator_error_sup(cand, gt.mdp, gt.policy, gt.horizon, gt.mu, gt.probe_count,
                                                   gt.probe_seed));
  o.suboptimality_proxy = std::max(0.0, std::abs(o.delta_j) - floor);
  rep.oracle = std::move(o);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const SelectionReport& rep) {
  nlohmann::json j;
  j["method"] = to_string(rep.method);
  j["kernel"] = rep.kernel ? nlohmann::json(rep.kernel->to_string()) : nlohmann::json(nullptr);
  j["candidate_ids"] = rep.candidate_ids;
  j["scores"] = rep.scores;
  j["selected_index"] = rep.selected_index;
  j["selected_id"] = rep.selected_id;
  j["q_hat"] = {{"n_states", rep.q_hat.n_states()},
                {"n_actions", rep.q_hat.n_actions()},
                {"values", std::vector<double>(rep.q_hat.values().begin(), rep.q_hat.values().end())}};
  if (rep.fixed_point) {
    j["fixed_point"] = {{"h_star", rep.fixed_point->h_star}, {"fp_tolerance", rep.fixed_point->fp_tolerance}};
    nlohmann::json exits = nlohmann::json::array();
    for (const auto& s : rep.sequences)
      exits.push_back(s.early_exit_step ? nlohmann::json(*s.early_exit_step) : nlohmann::json(nullptr));
    j["early_exit_steps"] = exits;
  }
  if (rep.oracle) {
    j["oracle"] = {{"delta_j", rep.oracle->delta_j},
                   {"abs_delta_j_all", rep.oracle->abs_delta_j_all},
                   {"excess_mae", rep.oracle->excess_mae},
                   {"bound_value", rep.oracle->bound_value},
                   {"suboptimality_proxy", rep.oracle->suboptimality_proxy}};
  }
  return j;
}

}  // namespace fqesel
