#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fqesel/mdp.hpp"
#include "fqesel/rng.hpp"

namespace fqesel {

/// Random "garnet" MDP: every (s, a) moves to `branching` distinct successor
/// states with Dirichlet weights. Rewards have uniform means in [0, 1] and
/// two-point noise with spread uniform in [0, max_spread].
inline TabularMdp garnet_mdp(std::size_t n_states, std::size_t n_actions, std::size_t branching,
                             double max_spread, CounterRng rng) {
  if (branching == 0 || branching > n_states) throw InvalidArgument("garnet_mdp: bad branching");
  const std::size_t pairs = n_states * n_actions;
  std::vector<double> trans(pairs * n_states, 0.0);
  std::vector<std::size_t> order(n_states);
  for (std::size_t i = 0; i < pairs; ++i) {
    for (std::size_t s = 0; s < n_states; ++s) order[s] = s;
    rng.shuffle(order);
    const auto w = rng.simplex(branching);
    for (std::size_t b = 0; b < branching; ++b) trans[i * n_states + order[b]] = w[b];
  }
  std::vector<double> mean(pairs), spread(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    mean[i] = rng.uniform();
    spread[i] = max_spread * rng.uniform();
  }
  std::vector<double> init(n_states, 1.0 / static_cast<double>(n_states));
  return TabularMdp(n_states, n_actions, std::move(init), std::move(trans), std::move(mean),
                    std::move(spread));
}

/// Fully random small MDP used by the identity checks: random S1, dense
/// random transitions and rewards.
inline TabularMdp random_dense_mdp(std::size_t n_states, std::size_t n_actions, CounterRng& rng) {
  const std::size_t pairs = n_states * n_actions;
  std::vector<double> trans;
  trans.reserve(pairs * n_states);
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto row = rng.simplex(n_states);
    trans.insert(trans.end(), row.begin(), row.end());
  }
  std::vector<double> mean(pairs), spread(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    mean[i] = rng.uniform();
    spread[i] = 0.5 * rng.uniform();
  }
  return TabularMdp(n_states, n_actions, rng.simplex(n_states), std::move(trans), std::move(mean),
                    std::move(spread));
}

/// Single-item inventory chain. State = stock level 0..capacity, action =
/// order size 0..n_actions-1 (delivered at once, truncated at capacity).
/// Demand is uniform on 0..max_demand. The expected one-step profit
/// (unit price 1, order cost 0.3/unit, holding cost 0.05/unit) is mapped
/// affinely into [0, 1].
inline TabularMdp inventory_mdp(std::size_t capacity, std::size_t n_actions, std::size_t max_demand,
                                double reward_spread) {
  const std::size_t ns = capacity + 1;
  const std::size_t pairs = ns * n_actions;
  constexpr double price = 1.0, order_cost = 0.3, hold_cost = 0.05;
  const double lo = -order_cost * static_cast<double>(n_actions - 1) - hold_cost * static_cast<double>(capacity);
  const double hi = price * static_cast<double>(capacity);
  const double pd = 1.0 / static_cast<double>(max_demand + 1);
  std::vector<double> trans(pairs * ns, 0.0), mean(pairs), spread(pairs, reward_spread);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      const std::size_t i = s * n_actions + a;
      const std::size_t stock = std::min(capacity, s + a);
      double profit = 0.0;
      for (std::size_t d = 0; d <= max_demand; ++d) {
        const std::size_t sold = std::min(stock, d);
        const std::size_t left = stock - sold;
        trans[i * ns + left] += pd;
        profit += pd * (price * static_cast<double>(sold) - order_cost * static_cast<double>(a) -
                        hold_cost * static_cast<double>(left));
      }
      mean[i] = std::clamp((profit - lo) / (hi - lo), 0.0, 1.0);
    }
  }
  std::vector<double> init(ns, 1.0 / static_cast<double>(ns));
  return TabularMdp(ns, n_actions, std::move(init), std::move(trans), std::move(mean), std::move(spread));
}

/// Random policy with Dirichlet rows.
inline Policy random_policy(std::size_t n_states, std::size_t n_actions, CounterRng& rng) {
  std::vector<double> p;
  p.reserve(n_states * n_actions);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto row = rng.simplex(n_actions);
    p.insert(p.end(), row.begin(), row.end());
  }
  return Policy(n_states, n_actions, std::move(p));
}

}  // namespace fqesel
