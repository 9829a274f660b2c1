#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fqesel/dataset.hpp"
#include "fqesel/errors.hpp"
#include "fqesel/operators.hpp"
#include "fqesel/rng.hpp"

namespace fqesel {

enum class KernelKind { gaussian, exponential, constant };

/// Kernel family and parameters, written as "gauss:sigma=1", "exp:p=1:sigma=0.1" or "const".
struct KernelSpec {
  KernelKind kind = KernelKind::constant;
  int p = 2;
  double sigma = 1.0;

  static KernelSpec gaussian(double sigma) { return validated({KernelKind::gaussian, 2, sigma}); }
  static KernelSpec exponential(int p, double sigma) { return validated({KernelKind::exponential, p, sigma}); }
  static KernelSpec constant() { return {KernelKind::constant, 2, 1.0}; }

  static KernelSpec validated(KernelSpec k) {
    if (k.kind == KernelKind::constant) return k;
    if (!(k.sigma > 0.0)) throw InvalidArgument("kernel: sigma must be positive");
    if (k.kind == KernelKind::exponential && k.p != 1 && k.p != 2)
      throw InvalidArgument("kernel: p must be 1 or 2");
    return k;
  }

  std::string to_string() const {
    char buf[64];
    auto sigma_text = [&] {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, sigma);
      return std::string(buf, ptr);
    };
    switch (kind) {
      case KernelKind::gaussian: return "gauss:sigma=" + sigma_text();
      case KernelKind::exponential: return "exp:p=" + std::to_string(p) + ":sigma=" + sigma_text();
      case KernelKind::constant: return "const";
    }
    return "const";
  }

  static KernelSpec parse(std::string_view text) {
    auto fail = [&](const std::string& why) -> KernelSpec {
      throw ConfigError("bad kernel spec '" + std::string(text) + "': " + why);
    };
    std::vector<std::string_view> parts;
    for (std::size_t start = 0;;) {
      const auto colon = text.find(':', start);
      parts.push_back(text.substr(start, colon == std::string_view::npos ? colon : colon - start));
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    KernelSpec k;
    if (parts[0] == "const") {
      if (parts.size() != 1) return fail("const takes no parameters");
      return constant();
    }
    if (parts[0] == "gauss") {
      k.kind = KernelKind::gaussian;
    } else if (parts[0] == "exp") {
      k.kind = KernelKind::exponential;
    } else {
      return fail("unknown family");
    }
    bool have_sigma = false, have_p = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const auto eq = parts[i].find('=');
      if (eq == std::string_view::npos) return fail("expected key=value");
      const auto key = parts[i].substr(0, eq);
      const auto val = parts[i].substr(eq + 1);
      if (key == "sigma") {
        auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), k.sigma);
        if (ec != std::errc() || ptr != val.data() + val.size()) return fail("sigma is not a number");
        have_sigma = true;
      } else if (key == "p" && k.kind == KernelKind::exponential) {
        auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), k.p);
        if (ec != std::errc() || ptr != val.data() + val.size()) return fail("p is not an integer");
        have_p = true;
      } else {
        return fail("unknown parameter");
      }
    }
    if (!have_sigma) return fail("missing sigma");
    if (k.kind == KernelKind::exponential && !have_p) return fail("missing p");
    try {
      return validated(k);
    } catch (const InvalidArgument& e) {
      return fail(e.what());
    }
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// The six exponential kernels p in {1, 2}, sigma in {0.1, 1, 10}.
inline std::vector<KernelSpec> exponential_kernel_grid() {
  std::vector<KernelSpec> g;
  for (int p : {1, 2})
    for (double s : {0.1, 1.0, 10.0}) g.push_back(KernelSpec::exponential(p, s));
  return g;
}

/// A kernel on state-action pairs: the family is applied to the (normalized)
/// embeddings of the two pairs. kappa(u, u) = 1 for every kind.
class Kernel {
 public:
  Kernel(KernelSpec spec, FeatureMap embedding) : spec_(KernelSpec::validated(spec)), embedding_(std::move(embedding)) {
    table_ = embedding_.table();
    const std::size_t n = n_pairs();
    if (n <= kCachedPairLimit) {
      cache_.resize(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) cache_[i * n + j] = cache_[j * n + i] = evaluate(i, j);
    }
  }

  const KernelSpec& spec() const noexcept { return spec_; }
  const FeatureMap& embedding() const noexcept { return embedding_; }
  std::size_t n_pairs() const noexcept { return embedding_.n_states() * embedding_.n_actions(); }

  double on_vectors(std::span<const double> u, std::span<const double> v) const {
    switch (spec_.kind) {
      case KernelKind::constant: return 1.0;
      case KernelKind::gaussian: {
        double d2 = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) d2 += (u[k] - v[k]) * (u[k] - v[k]);
        return std::exp(-d2 / (spec_.sigma * spec_.sigma));
      }
      case KernelKind::exponential: {
        double d = 0.0;
        if (spec_.p == 1) {
          for (std::size_t k = 0; k < u.size(); ++k) d += std::abs(u[k] - v[k]);
        } else {
          for (std::size_t k = 0; k < u.size(); ++k) d += (u[k] - v[k]) * (u[k] - v[k]);
          d = std::sqrt(d);
        }
        return std::exp(-d / spec_.sigma);
      }
    }
    return 1.0;
  }

  double operator()(std::size_t pair_u, std::size_t pair_v) const {
    if (!cache_.empty()) return cache_[pair_u * n_pairs() + pair_v];
    return evaluate(pair_u, pair_v);
  }

  /// Gram matrix over every state-action pair.
  Eigen::MatrixXd gram() const {
    const auto n = static_cast<Eigen::Index>(n_pairs());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        k(i, j) = k(j, i) = (*this)(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    return k;
  }

 private:
  static constexpr std::size_t kCachedPairLimit = 1024;

  double evaluate(std::size_t pair_u, std::size_t pair_v) const {
    const std::size_t dim = embedding_.dim();
    const std::span<const double> t(table_);
    return on_vectors(t.subspan(pair_u * dim, dim), t.subspan(pair_v * dim, dim));
  }

  KernelSpec spec_;
  FeatureMap embedding_;
  std::vector<double> table_;
  std::vector<double> cache_;
};

inline double kernel_eval(const Kernel& k, std::size_t pair_u, std::size_t pair_v) { return k(pair_u, pair_v); }

inline double kernel_eval(const Kernel& k, std::size_t s1, std::size_t a1, std::size_t s2, std::size_t a2) {
  const std::size_t na = k.embedding().n_actions();
  return k(s1 * na + a1, s2 * na + a2);
}

namespace detail {

inline double mu_quadratic_form(const Kernel& k, const SaFunction& g, std::span<const double> mu) {
  const std::size_t n = g.size();
  if (mu.size() != n || k.n_pairs() != n) throw InvalidArgument("dual norm: size mismatch");
  double q = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    const double au = mu[u] * g[u];
    if (au == 0.0) continue;
    double row = 0.0;
    for (std::size_t v = 0; v < n; ++v) row += k(u, v) * mu[v] * g[v];
    q += au * row;
  }
  return q;
}

}  // namespace detail

/// ||g||_{F*} = sqrt( E_{u, u' ~ mu} kappa(u, u') g(u) g(u') ) on a finite space.
inline double dual_norm_exact(const Kernel& k, const SaFunction& g, std::span<const double> mu) {
  const double q = detail::mu_quadratic_form(k, g, mu);
  if (q < -1e-10) throw KernelNotPsd("dual_norm_exact: negative quadratic form " + std::to_string(q));
  return std::sqrt(std::max(0.0, q));
}

/// E_mu[f* g] for the closed-form maximizer f* = K diag(mu) g / ||.||_F of
/// the dual-norm problem. Equal to dual_norm_exact by the representer argument.
inline double dual_norm_by_maximizer(const Kernel& k, const SaFunction& g, std::span<const double> mu) {
  const Eigen::MatrixXd gram = k.gram();
  const auto n = gram.rows();
  Eigen::VectorXd alpha(n);
  for (Eigen::Index i = 0; i < n; ++i) alpha(i) = mu[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
  const double norm2 = alpha.dot(gram * alpha);
  if (!(norm2 > 0.0)) return 0.0;
  const Eigen::VectorXd f = gram * alpha / std::sqrt(norm2);
  double val = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) val += mu[static_cast<std::size_t>(i)] * f(i) * g[static_cast<std::size_t>(i)];
  return val;
}

/// Largest E_mu[f g] over `trials` random unit-norm RKHS functions f = K alpha.
/// Never exceeds the dual norm.
inline double dual_norm_maximizer_check(const Kernel& k, const SaFunction& g, std::span<const double> mu,
                                        std::size_t trials, std::uint64_t seed = 0) {
  const Eigen::MatrixXd gram = k.gram();
  const auto n = gram.rows();
  const auto base = CounterRng::stream(seed, "dual_norm_maximizer_check");
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    auto rng = base.split(t);
    Eigen::VectorXd alpha(n);
    for (Eigen::Index i = 0; i < n; ++i) alpha(i) = rng.normal();
    const double norm2 = alpha.dot(gram * alpha);
    if (!(norm2 > 0.0)) continue;
    const Eigen::VectorXd f = gram * alpha / std::sqrt(norm2);
    double val = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) val += mu[static_cast<std::size_t>(i)] * f(i) * g[static_cast<std::size_t>(i)];
    best = std::max(best, std::abs(val));
  }
  return best;
}

/// RKHS norm of the minimum-norm interpolant of w on the finite pair space,
/// sqrt(w^T K^+ w). Infinite if w has a component in the null space of K.
inline double rkhs_norm_interpolant(const Kernel& k, std::span<const double> w) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k.gram());
  const auto& ev = eig.eigenvalues();
  const auto& vecs = eig.eigenvectors();
  const double tol = 1e-12 * std::max(1.0, ev.maxCoeff());
  Eigen::VectorXd wv(static_cast<Eigen::Index>(w.size()));
  for (Eigen::Index i = 0; i < wv.size(); ++i) wv(i) = w[static_cast<std::size_t>(i)];
  const double wnorm = wv.norm();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < ev.size(); ++j) {
    const double c = vecs.col(j).dot(wv);
    if (ev(j) > tol) {
      acc += c * c / ev(j);
    } else if (std::abs(c) > 1e-9 * std::max(1.0, wnorm)) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return std::sqrt(acc);
}

inline double min_gram_eigenvalue(const Eigen::MatrixXd& gram) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

/// (1/n^2) sum_{i,j} kappa(u_i, u_j) e_i e_j (V-statistic, diagonal included).
/// Residuals are first summed per pair in record order, then combined over
/// pairs in index order, so the result does not depend on any partitioning.
inline double kernel_v_statistic(const Kernel& k, const TransitionDataset& d, std::span<const double> residuals) {
  const std::size_t pairs = k.n_pairs();
  std::vector<double> agg(pairs, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) agg[d.pair(i)] += residuals[i];
  double acc = 0.0;
  for (std::size_t u = 0; u < pairs; ++u) {
    if (agg[u] == 0.0) continue;
    double row = 0.0;
    for (std::size_t v = 0; v < pairs; ++v)
      if (agg[v] != 0.0) row += k(u, v) * agg[v];
    acc += agg[u] * row;
  }
  const auto n = static_cast<double>(d.size());
  return acc / (n * n);
}

/// Residuals r_i + gamma V_f(s'_i) - (Xf)(s_i, a_i), where `xf` is X f.
inline std::vector<double> bellman_residuals(const SaFunction& xf, const SaFunction& f, const TransitionDataset& d,
                                             const Policy& policy, const TargetSpec& targets) {
  auto e = bellman_targets(f, d, policy, targets);
  for (std::size_t i = 0; i < d.size(); ++i) e[i] -= xf[d.pair(i)];
  return e;
}

/// Kernel Bellman loss of X at f on d, clamped at zero.
inline double kernel_bellman_loss(const Kernel& k, const BellmanOperatorCandidate& x, const QFunction& f,
                                  const TransitionDataset& d, const Policy& policy, const TargetSpec& targets) {
  const auto e = bellman_residuals(x.apply(f), f, d, policy, targets);
  return std::max(0.0, kernel_v_statistic(k, d, e));
}

}  // namespace fqesel
