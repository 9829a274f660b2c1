#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fqesel/fqesel.hpp"
#include "support/oracles.hpp"

using namespace fqesel;
using nlohmann::json;

TEST(Manifest, DefaultHasEightCandidatesSpanningTheGrid) {
  const auto m = default_manifest();
  ASSERT_EQ(m.size(), 8u);
  std::map<OperatorKind, int> kinds;
  for (const auto& e : m) ++kinds[e.kind];
  EXPECT_EQ(kinds[OperatorKind::tabular_mean], 1);
  EXPECT_EQ(kinds[OperatorKind::fqe_ridge], 3);
  EXPECT_EQ(kinds[OperatorKind::fqe_knn], 3);
  EXPECT_EQ(kinds[OperatorKind::constant_shift], 1);
  EXPECT_NO_THROW(validate_manifest(m));
}

TEST(Manifest, JsonRoundTrip) {
  const auto m = default_manifest();
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
  EXPECT_EQ(manifest_from_json(manifest_to_json(m).at("candidates")), m);
}

TEST(Manifest, ParsesEveryKind) {
  const auto j = json::parse(R"([
    {"id": "exact", "kind": "exact_tabular"},
    {"id": "mean", "kind": "tabular_mean"},
    {"id": "r", "kind": "fqe_ridge", "lambda": 0.5, "features": "proj:d=3:seed=9"},
    {"id": "k", "kind": "fqe_knn", "k": 4},
    {"id": "s", "kind": "constant_shift", "base": "mean", "shift": -0.25}
  ])");
  const auto m = manifest_from_json(j);
  ASSERT_EQ(m.size(), 5u);
  EXPECT_EQ(m[0].kind, OperatorKind::exact_tabular);
  EXPECT_EQ(m[2].lambda, 0.5);
  EXPECT_EQ(m[2].features, "proj:d=3:seed=9");
  EXPECT_EQ(m[3].k, 4u);
  EXPECT_EQ(m[3].features, "coords");
  EXPECT_EQ(m[4].base, "mean");
  EXPECT_EQ(m[4].shift, -0.25);
}

TEST(Manifest, RejectsBadEntries) {
  const char* bad[] = {
      R"([])",
      R"([{"id": "a", "kind": "forest"}])",
      R"([{"id": "a", "kind": "tabular_mean", "lambda": 1}])",
      R"([{"id": "a", "kind": "fqe_ridge"}])",
      R"([{"id": "a", "kind": "fqe_ridge", "lambda": -1}])",
      R"([{"id": "a", "kind": "fqe_knn", "k": 0}])",
      R"([{"id": "a", "kind": "fqe_knn", "k": 2, "features": "pixels"}])",
      R"([{"id": "a", "kind": "tabular_mean"}, {"id": "a", "kind": "tabular_mean"}])",
      R"([{"id": "s", "kind": "constant_shift", "base": "a", "shift": 1}, {"id": "a", "kind": "tabular_mean"}])",
      R"({"candidates": [{"id": "a", "kind": "tabular_mean"}], "extra": 1})",
      R"({"items": []})",
      R"([{"kind": "tabular_mean"}])",
      R"([{"id": "", "kind": "tabular_mean"}])",
  };
  for (const char* text : bad) EXPECT_THROW(manifest_from_json(json::parse(text)), ConfigError) << text;
}

TEST(Manifest, FeatureNames) {
  EXPECT_EQ(feature_map_from_name("onehot", 3, 2).dim(), 6u);
  EXPECT_EQ(feature_map_from_name("coords", 3, 2).dim(), 2u);
  const auto p = feature_map_from_name("proj:d=5:seed=3", 3, 2);
  EXPECT_EQ(p.dim(), 5u);
  EXPECT_EQ(p.table(), FeatureMap::random_projection(3, 2, 5, 3).table());
  for (const char* bad : {"proj", "proj:d=0:seed=1", "proj:d=2", "proj:d=x:seed=1", "raw"})
    EXPECT_THROW(feature_map_from_name(bad, 3, 2), ConfigError) << bad;
}

TEST(Manifest, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "fqesel_manifest_test.json";
  {
    std::ofstream out(path);
    out << manifest_to_json(default_manifest()).dump(2);
  }
  EXPECT_EQ(load_manifest(path.string()), default_manifest());
  std::filesystem::remove(path);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.json"), IoError);
}

TEST(Instantiate, BuildsEveryCandidateInOrder) {
  auto rng = CounterRng::stream(1, "inst");
  const auto mdp = random_dense_mdp(5, 2, rng);
  const auto pi = random_policy(5, 2, rng);
  const auto hz = HorizonSpec::finite(3, 0.9);
  const auto d = sample_dataset(mdp, std::vector<double>(10, 0.1), 400, 2);
  auto m = default_manifest();
  m.insert(m.begin(), CandidateEntry{"exact", OperatorKind::exact_tabular, 0.0, 1, "coords", "", 0.0});
  const auto cs = instantiate_candidates(m, {d, pi, hz, &mdp});
  ASSERT_EQ(cs.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(cs[i].id(), m[i].id);
  EXPECT_EQ(cs[0].kind(), OperatorKind::exact_tabular);
  EXPECT_EQ(cs.index_of("shifted_mean"), 8u);
  // the shift is applied before the clip of its base
  const auto f = oracle::random_function(5, 2, rng, 0.0, 1.0);
  const auto& mean = cs[cs.index_of("tabular_mean")];
  const auto& shifted = cs[cs.index_of("shifted_mean")];
  auto expect = mean.apply_unclipped(f);
  for (double& v : expect.values()) v = std::clamp(v + 0.5, 0.0, time_constant(hz));
  EXPECT_EQ(shifted.apply(f), expect);
  EXPECT_THROW(instantiate_candidates(m, {d, pi, hz, nullptr}), ConfigError);
}

TEST(Instantiate, WorkerCountDoesNotChangeOperators) {
  auto rng = CounterRng::stream(3, "workers");
  const auto mdp = random_dense_mdp(4, 3, rng);
  const auto pi = random_policy(4, 3, rng);
  const auto hz = HorizonSpec::infinite(0.8);
  const auto d = sample_dataset(mdp, std::vector<double>(12, 1.0 / 12), 300, 4);
  const auto one = instantiate_candidates(default_manifest(), {d, pi, hz, nullptr, NextAction::expected, 1});
  const auto four = instantiate_candidates(default_manifest(), {d, pi, hz, nullptr, NextAction::expected, 4});
  const auto f = oracle::random_function(4, 3, rng, 0.0, 5.0);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].apply(f), four[i].apply(f));
}
