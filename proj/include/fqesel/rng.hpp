#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "fqesel/errors.hpp"

namespace fqesel {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return mix64(h);
}

/// Counter-based generator: the i-th draw is a pure function of (key, i).
///
/// Streams are derived from a (seed, tag) pair, and sub-streams by `split`,
/// so every operation owns its randomness regardless of call order or the
/// number of workers. All distributions are implemented here rather than
/// through <random> so that outputs are identical across standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static CounterRng stream(std::uint64_t seed, std::string_view tag) noexcept {
    return CounterRng(mix64(seed ^ hash_tag(tag)));
  }

  CounterRng split(std::uint64_t index) const noexcept {
    return CounterRng(mix64(key_ ^ mix64(index + 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("CounterRng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Index drawn from an (unnormalized, nonnegative) weight vector by
  /// inverse-CDF scan. Zero-weight entries are never returned.
  std::size_t categorical(std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw InvalidArgument("categorical: weights sum to zero");
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (target < acc) return i;
    }
    return last_positive;
  }

  /// Random probability vector (flat Dirichlet via normalized exponentials).
  std::vector<double> simplex(std::size_t n) {
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& x : p) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      x = -std::log(u);
      total += x;
    }
    for (auto& x : p) x /= total;
    return p;
  }

  /// In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Inverse-CDF sampler for a fixed discrete distribution, O(log n) per draw.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(std::span<const double> probs) : cdf_(probs.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] < 0.0) throw InvalidArgument("DiscreteSampler: negative probability");
      acc += probs[i];
      cdf_[i] = acc;
    }
    if (!(acc > 0.0)) throw InvalidArgument("DiscreteSampler: zero total mass");
  }

  std::size_t operator()(CounterRng& rng) const {
    const double target = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    if (it != cdf_.end()) return static_cast<std::size_t>(it - cdf_.begin());
    // target rounded up to the total: fall back to the last cell with mass
    std::size_t idx = cdf_.size() - 1;
    while (idx > 0 && cdf_[idx] == cdf_[idx - 1]) --idx;
    return idx;
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace fqesel
