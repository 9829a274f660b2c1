#include <gtest/gtest.h>

#include <numeric>

#include "fqesel/fqesel.hpp"
#include "support/oracles.hpp"

using namespace fqesel;

namespace {

// s0 -> s1 -> s1, reward 1 only in s1, one action.
TabularMdp two_state_chain() {
  return TabularMdp(2, 1, {1.0, 0.0}, {0.0, 1.0, 0.0, 1.0}, {0.0, 1.0}, {0.0, 0.0});
}

TabularMdp single_state(double reward) { return TabularMdp(1, 1, {1.0}, {1.0}, {reward}, {0.0}); }

}  // namespace

TEST(TimeConstant, Examples) {
  EXPECT_DOUBLE_EQ(time_constant(HorizonSpec::finite(3, 0.5)), 1.75);
  EXPECT_DOUBLE_EQ(time_constant(HorizonSpec::finite(1, 0.9)), 1.0);
  EXPECT_NEAR(time_constant(HorizonSpec::infinite(0.9)), 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(time_constant(HorizonSpec::finite(4, 1.0)), 4.0);
}

TEST(TimeConstant, InvalidHorizons) {
  EXPECT_THROW(HorizonSpec::infinite(1.0), InvalidHorizon);
  EXPECT_THROW(HorizonSpec::finite(0, 0.5), InvalidHorizon);
  EXPECT_THROW(HorizonSpec::finite(2, 1.5), InvalidHorizon);
  EXPECT_THROW(time_constant(HorizonSpec{std::nullopt, 1.0}), InvalidHorizon);
}

TEST(ClipQ, Examples) {
  SaFunction f(1, 3, std::vector<double>{2.0, -0.3, 0.7});
  const auto c = clip_q(f, 1.75);
  EXPECT_EQ(c[0], 1.75);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(c[2], 0.7);
  EXPECT_THROW(clip_q(f, 0.0), InvalidArgument);
}

TEST(TabularMdp, RejectsBadInputs) {
  EXPECT_THROW(TabularMdp(1, 1, {0.5}, {1.0}, {0.5}, {0.0}), InvalidArgument);
  EXPECT_THROW(TabularMdp(1, 1, {1.0}, {0.9}, {0.5}, {0.0}), InvalidArgument);
  EXPECT_THROW(TabularMdp(1, 1, {1.0}, {1.0}, {1.5}, {0.0}), InvalidArgument);
  EXPECT_THROW(TabularMdp(1, 1, {1.0}, {1.0}, {0.5}, {-0.1}), InvalidArgument);
  EXPECT_THROW(TabularMdp(2, 1, {1.0}, {1.0}, {0.5}, {0.0}), InvalidArgument);
}

TEST(RewardLaw, KeepsMeanAndRange) {
  for (double m : {0.0, 0.1, 0.5, 0.95, 1.0})
    for (double s : {0.0, 0.2, 0.7}) {
      const auto law = two_point_reward(m, s);
      EXPECT_GE(law.lo, 0.0);
      EXPECT_LE(law.hi, 1.0);
      EXPECT_NEAR(law.lo * (1 - law.p_hi) + law.hi * law.p_hi, m, 1e-15);
    }
}

TEST(ExactQ, SingleStateIsTimeConstant) {
  const auto mdp = single_state(1.0);
  const auto pi = Policy::uniform(1, 1);
  const auto q = exact_q(mdp, pi, HorizonSpec::finite(3, 0.5));
  EXPECT_DOUBLE_EQ(q[0], 1.75);
  EXPECT_DOUBLE_EQ(policy_value(mdp, pi, q), 1.75);
}

TEST(ExactQ, TwoStateChain) {
  const auto mdp = two_state_chain();
  const auto pi = Policy::uniform(2, 1);
  const auto q = exact_q(mdp, pi, HorizonSpec::finite(2, 1.0));
  EXPECT_DOUBLE_EQ(q(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(q(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(policy_value(mdp, pi, q), 1.0);
  const auto by_paths = oracle::q_by_paths(mdp, pi, 1.0, 2);
  EXPECT_DOUBLE_EQ(by_paths(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(by_paths(1, 0), 2.0);
}

TEST(ExactQ, HorizonOneIsRewardMean) {
  auto rng = CounterRng::stream(11, "h1");
  const auto mdp = random_dense_mdp(4, 3, rng);
  const auto pi = random_policy(4, 3, rng);
  const auto q = exact_q(mdp, pi, HorizonSpec::finite(1, 0.7));
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) EXPECT_EQ(q[i], mdp.reward_means()[i]);
}

TEST(ExactQ, MatchesPathEnumeration) {
  auto rng = CounterRng::stream(12, "paths");
  for (int t = 0; t < 20; ++t) {
    const std::size_t ns = 2 + rng.below(3), na = 1 + rng.below(3);
    const int h = 1 + static_cast<int>(rng.below(4));
    const double gamma = rng.uniform();
    const auto mdp = random_dense_mdp(ns, na, rng);
    const auto pi = random_policy(ns, na, rng);
    const auto q = exact_q(mdp, pi, HorizonSpec::finite(h, gamma));
    const auto ref = oracle::q_by_paths(mdp, pi, gamma, h);
    EXPECT_LE(sup_distance(q, ref), 1e-12);
    EXPECT_NEAR(policy_value(mdp, pi, q), oracle::value_by_paths(mdp, pi, gamma, h), 1e-12);
  }
}

TEST(ExactQ, EqualsRepeatedBellmanApplication) {
  auto rng = CounterRng::stream(13, "rep");
  const auto mdp = random_dense_mdp(5, 2, rng);
  const auto pi = random_policy(5, 2, rng);
  const auto hz = HorizonSpec::finite(6, 0.95);
  QFunction f(5, 2);
  for (int h = 0; h < 6; ++h) f = exact_bellman_apply(mdp, pi, hz, f);
  EXPECT_LE(sup_distance(f, exact_q(mdp, pi, hz)), 1e-12);
}

TEST(ExactQ, InfiniteHorizonMatchesLinearSolve) {
  auto rng = CounterRng::stream(14, "inf");
  for (double gamma : {0.5, 0.9, 0.99}) {
    const auto mdp = random_dense_mdp(4, 2, rng);
    const auto pi = random_policy(4, 2, rng);
    const auto q = exact_q(mdp, pi, HorizonSpec::infinite(gamma));
    EXPECT_LE(sup_distance(q, oracle::q_by_linear_solve(mdp, pi, gamma)), 1e-9);
    EXPECT_TRUE(q.within(0.0, time_constant(HorizonSpec::infinite(gamma))));
  }
}

TEST(BellmanApply, Examples) {
  auto rng = CounterRng::stream(15, "b");
  const auto mdp = random_dense_mdp(3, 2, rng);
  const auto pi = random_policy(3, 2, rng);
  const auto hz = HorizonSpec::finite(3, 0.8);
  const auto zero = exact_bellman_apply(mdp, pi, hz, QFunction(3, 2));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(zero[i], mdp.reward_means()[i]);
  const auto f = oracle::random_function(3, 2, rng, 0.0, 2.44);
  const auto g0 = exact_bellman_apply(mdp, pi, HorizonSpec::finite(3, 0.0), f);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(g0[i], mdp.reward_means()[i]);
  const auto q2 = exact_q(mdp, pi, HorizonSpec::finite(2, 0.8));
  EXPECT_LE(sup_distance(exact_bellman_apply(mdp, pi, hz, q2), exact_q(mdp, pi, hz)), 1e-15);
}

TEST(PolicyValue, ZeroFunction) {
  auto rng = CounterRng::stream(16, "z");
  const auto mdp = random_dense_mdp(3, 2, rng);
  EXPECT_EQ(policy_value(mdp, Policy::uniform(3, 2), QFunction(3, 2)), 0.0);
}

TEST(MixPolicies, Examples) {
  const auto u = Policy::uniform(2, 2);
  const std::vector<std::size_t> acts{0, 1};
  const auto d = Policy::deterministic(acts, 2);
  EXPECT_EQ(mix_policies(u, d, 1.0), u);
  EXPECT_EQ(mix_policies(u, d, 0.0), d);
  const auto m = mix_policies(u, d, 0.5);
  EXPECT_DOUBLE_EQ(m.prob(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(m.prob(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(m.prob(1, 1), 0.75);
  EXPECT_THROW(mix_policies(u, d, 1.5), InvalidArgument);
  EXPECT_THROW(mix_policies(u, Policy::uniform(3, 2), 0.5), InvalidArgument);
}

TEST(MixPolicies, RowsStayStochastic) {
  auto rng = CounterRng::stream(17, "mix");
  for (int t = 0; t < 200; ++t) {
    const std::size_t na = 1 + rng.below(5);
    const auto a = random_policy(4, na, rng);
    const auto b = random_policy(4, na, rng);
    // Construction re-validates every row to 1e-12.
    EXPECT_NO_THROW(mix_policies(a, b, rng.uniform()));
  }
}

TEST(Occupancy, BehaviorEqualsFirstMarginal) {
  auto rng = CounterRng::stream(18, "occ");
  const auto mdp = random_dense_mdp(3, 2, rng);
  const auto pi = random_policy(3, 2, rng);
  const auto mu = initial_pair_dist(mdp, pi);
  const auto occ = occupancy_profile(mdp, pi, HorizonSpec::finite(1, 1.0), mu);
  for (double w : occ.weights_per_step[0]) EXPECT_NEAR(w, 1.0, 1e-12);
  EXPECT_NEAR(occ.weight_l2_norms[0], 1.0, 1e-12);
}

TEST(Occupancy, DeterministicChainWeights) {
  // uniform mu over 2 pairs; P_1 on (s0), P_2 on (s1)
  const auto mdp = two_state_chain();
  const auto pi = Policy::uniform(2, 1);
  const std::vector<double> mu{0.5, 0.5};
  const auto occ = occupancy_profile(mdp, pi, HorizonSpec::finite(2, 1.0), mu);
  EXPECT_EQ(occ.weights_per_step[0], (std::vector<double>{2.0, 0.0}));
  EXPECT_EQ(occ.weights_per_step[1], (std::vector<double>{0.0, 2.0}));
  EXPECT_NEAR(occ.weight_l2_norms[0], std::sqrt(2.0), 1e-15);
  EXPECT_EQ(occ.discounted_average, (std::vector<double>{0.5, 0.5}));
}

TEST(Occupancy, MarginalsMatchPathsAndSumToOne) {
  auto rng = CounterRng::stream(19, "marg");
  for (int t = 0; t < 10; ++t) {
    const auto mdp = random_dense_mdp(3, 2, rng);
    const auto pi = random_policy(3, 2, rng);
    const auto mu = oracle::random_full_support(6, rng);
    const auto occ = occupancy_profile(mdp, pi, HorizonSpec::finite(4, 0.9), mu);
    const auto ref = oracle::marginals_by_paths(mdp, pi, 4);
    for (std::size_t h = 0; h < 4; ++h) {
      EXPECT_NEAR(std::accumulate(occ.per_step_marginals[h].begin(), occ.per_step_marginals[h].end(), 0.0), 1.0,
                  1e-10);
      for (std::size_t u = 0; u < 6; ++u) EXPECT_NEAR(occ.per_step_marginals[h][u], ref[h][u], 1e-12);
    }
    EXPECT_NEAR(std::accumulate(occ.discounted_average.begin(), occ.discounted_average.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Occupancy, InfiniteHorizonAverageSumsToOne) {
  auto rng = CounterRng::stream(20, "nu");
  const auto mdp = random_dense_mdp(4, 2, rng);
  const auto pi = random_policy(4, 2, rng);
  const auto mu = oracle::random_full_support(8, rng);
  const auto occ = occupancy_profile(mdp, pi, HorizonSpec::infinite(0.9), mu);
  EXPECT_NEAR(std::accumulate(occ.discounted_average.begin(), occ.discounted_average.end(), 0.0), 1.0, 1e-12);
  // truncated per-step sum agrees with the exact average to the tail mass
  std::vector<double> approx(8, 0.0);
  double pw = 1.0;
  for (const auto& p : occ.per_step_marginals) {
    for (std::size_t u = 0; u < 8; ++u) approx[u] += 0.1 * pw * p[u];
    pw *= 0.9;
  }
  for (std::size_t u = 0; u < 8; ++u) EXPECT_NEAR(approx[u], occ.discounted_average[u], 1e-9);
}

TEST(Occupancy, SupportViolationNamesPair) {
  const auto mdp = two_state_chain();
  const auto pi = Policy::uniform(2, 1);
  const std::vector<double> mu{1.0, 0.0};
  try {
    occupancy_profile(mdp, pi, HorizonSpec::finite(2, 1.0), mu);
    FAIL() << "expected AssumptionViolation";
  } catch (const AssumptionViolation& e) {
    EXPECT_EQ(e.step(), 2u);
    EXPECT_EQ(e.state(), 1u);
    EXPECT_EQ(e.action(), 0u);
  }
}

TEST(FixedPointIdentity, ValueErrorIsDiscountedResidual) {
  auto rng = CounterRng::stream(21, "fp");
  for (int t = 0; t < 20; ++t) {
    const auto mdp = random_dense_mdp(4, 2, rng);
    const auto pi = random_policy(4, 2, rng);
    const auto hz = HorizonSpec::infinite(0.5 + 0.45 * rng.uniform());
    const auto mu = oracle::random_full_support(8, rng);
    const auto occ = occupancy_profile(mdp, pi, hz, mu);
    const auto q = oracle::random_function(4, 2, rng, 0.0, time_constant(hz));
    EXPECT_NEAR(value_error(mdp, pi, hz, q), fixed_point_value_error(q, mdp, pi, hz, occ), 1e-9);
  }
}

TEST(GreedyExpert, SingleActionAndDominance) {
  const auto mdp = two_state_chain();
  EXPECT_EQ(greedy_expert(mdp, HorizonSpec::finite(3, 1.0)), Policy::uniform(2, 1));
  // action 0 pays 1, action 1 pays 0
  const TabularMdp dom(2, 2, {0.5, 0.5}, {0, 1, 0, 1, 1, 0, 1, 0}, {1, 0, 1, 0}, {});
  const auto e = greedy_expert(dom, HorizonSpec::finite(3, 1.0));
  EXPECT_EQ(e.prob(0, 0), 1.0);
  EXPECT_EQ(e.prob(1, 0), 1.0);
}

TEST(GreedyExpert, MatchesExhaustiveSearchFinite) {
  auto rng = CounterRng::stream(22, "exp");
  for (int t = 0; t < 5; ++t) {
    const auto mdp = random_dense_mdp(4, 2, rng);
    const auto hz = HorizonSpec::finite(3, 1.0);
    const auto qstar = oracle::optimal_q_by_search(mdp, 1.0, 3);
    EXPECT_LE(sup_distance(optimal_q(mdp, hz), qstar), 1e-12);
    const auto e = greedy_expert(mdp, hz);
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t a = e.prob(s, 0) == 1.0 ? 0 : 1;
      EXPECT_GE(qstar(s, a), qstar(s, 1 - a) - 1e-12);
    }
  }
}

TEST(GreedyExpert, OptimalAmongStationaryPoliciesInfinite) {
  auto rng = CounterRng::stream(23, "expinf");
  for (int t = 0; t < 5; ++t) {
    const auto mdp = random_dense_mdp(4, 3, rng);
    const auto hz = HorizonSpec::infinite(0.9);
    const auto e = greedy_expert(mdp, hz);
    EXPECT_NEAR(policy_value(mdp, e, exact_q(mdp, e, hz)), oracle::optimal_value_by_search(mdp, 0.9), 1e-9);
  }
}

TEST(MdpIo, RoundTripIsExact) {
  const auto mdp = garnet_mdp(5, 3, 2, 0.3, CounterRng::stream(1, "g"));
  const auto back = read_mdp(write_mdp(mdp));
  EXPECT_EQ(back, mdp);
  EXPECT_THROW(read_mdp("{\"n_states\": 1, \"bogus\": 2}"), ConfigError);
}

TEST(Generators, ProduceValidModels) {
  const auto inv = inventory_mdp(6, 3, 4, 0.2);
  EXPECT_EQ(inv.n_states(), 7u);
  for (double r : inv.reward_means()) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
  const auto g = garnet_mdp(10, 2, 3, 0.5, CounterRng::stream(2, "g"));
  for (std::size_t u = 0; u < g.n_pairs(); ++u) {
    int nz = 0;
    for (double p : g.next_state_probs(u)) nz += p > 0.0;
    EXPECT_LE(nz, 3);
  }
}
