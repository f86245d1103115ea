#include "adload/policies.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "adload/stats.hpp"
#include "doctest.h"

using namespace adload;

namespace {

const ActionConstraints kDefaults{};

DecisionContext ctx_of(const std::vector<double>& features, const ActionCatalog& catalog,
                       int run_fetch_index = 0) {
  return DecisionContext{features, &catalog, run_fetch_index};
}

std::vector<double> zero_features() { return std::vector<double>(kContextDim, 0.0); }

}  // namespace

TEST_SUITE_BEGIN("policies");

TEST_CASE("every policy distribution sums to one with no mass off-catalog") {
  const auto catalog0 = enumerate_actions(kDefaults, 0, std::nullopt);
  const auto catalog1 = enumerate_actions(kDefaults, 1, 5);
  auto features = zero_features();
  features[kFatigueScore] = 0.5;
  SoftmaxPolicyParams sp = SoftmaxPolicyParams::zeros(kContextDim, 1.0, 0.01);
  sp.weights(3, 2) = 0.7;
  const std::vector<PolicyPtr> policies = {
      no_ads_policy(),          max_ads_policy(), uniform_policy(),
      static_policy({3, 5}),    fatigue_policy({}), softmax_policy(sp)};
  for (const auto& policy : policies) {
    for (const auto* catalog : {&catalog0, &catalog1}) {
      const auto dist = policy->action_distribution(ctx_of(features, *catalog));
      double total = 0.0;
      for (double p : dist) {
        CHECK(p >= 0.0);
        total += p;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      // The invalid action {1} on the first sub-feed carries zero mass.
      CHECK(policy->probability_of(ctx_of(features, catalog0), FeedAction{{1}, 0}) == 0.0);
    }
  }
}

TEST_CASE("no_ads and max_ads baselines") {
  const auto catalog0 = enumerate_actions(kDefaults, 0, std::nullopt);
  const auto features = zero_features();
  const auto no_ads = no_ads_policy();
  CHECK(no_ads->probability_of(ctx_of(features, catalog0), FeedAction{{}, 0}) == 1.0);

  // First sub-feed default catalog has 1-ad actions only: earliest is {2}.
  const auto max_ads = max_ads_policy();
  CHECK(max_ads->probability_of(ctx_of(features, catalog0), FeedAction{{2}, 0}) == 1.0);

  // Second sub-feed, prev ad at overall position 2 (offset 3): the catalog
  // excludes slot 1 by the cross-feed gap, so the earliest valid slot is {2}.
  const auto catalog_off3 = enumerate_actions(kDefaults, 1, 3);
  CHECK(max_ads->probability_of(ctx_of(features, catalog_off3), FeedAction{{2}, 1}) == 1.0);

  // With the gap inactive the two-ad action {1,5} is the max-ads choice.
  const auto catalog_free = enumerate_actions(kDefaults, 1, std::nullopt);
  CHECK(max_ads->probability_of(ctx_of(features, catalog_free), FeedAction{{1, 5}, 1}) == 1.0);
}

TEST_CASE("uniform policy matches catalog size and sampling frequencies converge") {
  const auto catalog = enumerate_actions(kDefaults, 0, std::nullopt);
  const auto features = zero_features();
  const auto policy = uniform_policy();
  const auto dist = policy->action_distribution(ctx_of(features, catalog));
  for (double p : dist) CHECK(p == doctest::Approx(0.2));

  // Chi-square goodness of fit at N=10k, 5% level.
  Rng rng(123);
  std::vector<int> counts(catalog.size(), 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[policy->sample(ctx_of(features, catalog), rng)];
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / catalog.size();
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < chi_square_quantile(0.95, static_cast<int>(catalog.size()) - 1));
}

TEST_CASE("static policy maps overall positions to sub-feed slots") {
  const auto features = zero_features();
  const auto catalog0 = enumerate_actions(kDefaults, 0, std::nullopt);
  const auto policy_35 = static_policy({3, 5});
  // (3,5): overall positions {3, 9} -> sub-feed 0 slot 3.
  CHECK(policy_35->probability_of(ctx_of(features, catalog0), FeedAction{{3}, 0}) == 1.0);
  // Sub-feed 1 starts at overall 6; position 9 -> slot 4. Offset from the ad
  // at overall 3 is 2 posts (4 and 5), and 2+4 > 4 keeps it valid.
  const auto catalog1 = enumerate_actions(kDefaults, 1, 2);
  CHECK(policy_35->probability_of(ctx_of(features, catalog1), FeedAction{{4}, 1}) == 1.0);

  // (6,5): overall {6} -> sub-feed 1 slot 1 (valid without a recent ad).
  const auto policy_65 = static_policy({6, 5});
  CHECK(policy_65->probability_of(ctx_of(features, catalog0), FeedAction{{}, 0}) == 1.0);
  const auto catalog1_free = enumerate_actions(kDefaults, 1, std::nullopt);
  CHECK(policy_65->probability_of(ctx_of(features, catalog1_free), FeedAction{{1}, 1}) == 1.0);

  // Offset beyond the fetch: no ads on fetch 0.
  const auto policy_far = static_policy({12, 5});
  CHECK(policy_far->probability_of(ctx_of(features, catalog0), FeedAction{{}, 0}) == 1.0);
  CHECK(policy_far->probability_of(ctx_of(features, catalog1_free), FeedAction{{}, 1}) == 1.0);
  // ...but fetch 1 contains overall position 12 -> sub-feed 0 slot 2.
  CHECK(policy_far->probability_of(ctx_of(features, catalog0, 1), FeedAction{{2}, 0}) == 1.0);

  // A configured position that violates pruning is dropped: (1,5) on the
  // first sub-feed falls back to no ads at fetch 0.
  const auto policy_bad = static_policy({1, 5});
  CHECK(policy_bad->probability_of(ctx_of(features, catalog0), FeedAction{{}, 0}) == 1.0);
}

TEST_CASE("fatigue policy threshold cases") {
  const auto catalog_two_ads = enumerate_actions(kDefaults, 1, std::nullopt);  // has {1,5}
  const auto catalog_first = enumerate_actions(kDefaults, 0, std::nullopt);    // 1 ad max
  FatiguePolicyConfig cfg;  // default_ads=1, thresholds 0.3 / 0.7
  const auto policy = fatigue_policy(cfg);

  auto features = zero_features();
  features[kFatigueScore] = 0.1;  // low fatigue -> default + 1 = 2 ads
  CHECK(policy->probability_of(ctx_of(features, catalog_two_ads), FeedAction{{1, 5}, 1}) == 1.0);
  // Clamped to the largest feasible count on the first sub-feed (one ad).
  CHECK(policy->probability_of(ctx_of(features, catalog_first), FeedAction{{2}, 0}) == 1.0);

  features[kFatigueScore] = 0.5;  // between thresholds -> default = 1 ad
  CHECK(policy->probability_of(ctx_of(features, catalog_two_ads), FeedAction{{1}, 1}) == 1.0);

  features[kFatigueScore] = 0.9;  // high fatigue with default 0 -> clamped to 0
  FatiguePolicyConfig zero_cfg;
  zero_cfg.default_ads = 0;
  const auto zero_policy = fatigue_policy(zero_cfg);
  CHECK(zero_policy->probability_of(ctx_of(features, catalog_two_ads), FeedAction{{}, 1}) == 1.0);

  const std::vector<double> short_features(2, 0.0);
  CHECK_THROWS_AS((void)policy->action_distribution(ctx_of(short_features, catalog_first)),
                  config_error);
  CHECK_THROWS_AS((void)fatigue_policy({1, 0.7, 0.3}), config_error);
}

TEST_CASE("softmax policy: zero weights, temperature limit, epsilon floor") {
  const auto catalog = enumerate_actions(kDefaults, 0, std::nullopt);
  const auto features = zero_features();

  const auto flat = softmax_policy(SoftmaxPolicyParams::zeros(kContextDim));
  for (double p : flat->action_distribution(ctx_of(features, catalog)))
    CHECK(p == doctest::Approx(0.2));

  SoftmaxPolicyParams peaked = SoftmaxPolicyParams::zeros(kContextDim, 1e-4, 0.0);
  const int target_mask = catalog.action(2).to_bitmask();
  peaked.weights(static_cast<std::size_t>(target_mask), kContextDim) = 1.0;  // bias logit
  const auto dist = softmax_policy(peaked)->action_distribution(ctx_of(features, catalog));
  CHECK(dist[2] > 0.999999);

  SoftmaxPolicyParams floored = SoftmaxPolicyParams::zeros(kContextDim, 1.0, 0.1);
  floored.weights(static_cast<std::size_t>(target_mask), kContextDim) = 50.0;
  const auto floored_dist =
      softmax_policy(floored)->action_distribution(ctx_of(features, catalog));
  for (double p : floored_dist) CHECK(p >= 0.02 - 1e-12);  // epsilon/|A|
}

TEST_CASE("policy files round-trip with a constraints hash") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto catalog = enumerate_actions(kDefaults, 1, std::nullopt);
  auto features = zero_features();
  features[kFatigueScore] = 0.4;
  features[kPlatformAgeDays] = 12.0;

  SoftmaxPolicyParams sp = SoftmaxPolicyParams::zeros(kContextDim, 0.7, 0.01);
  Rng rng(9);
  for (double& v : sp.weights.data()) v = 0.3 * rng.normal();
  MlpPolicyParams mp;
  mp.hidden = Matrix(8, kContextDim + 1);
  for (double& v : mp.hidden.data()) v = 0.2 * rng.normal();
  mp.output = Matrix(kMaxBitmask + 1, 9);
  for (double& v : mp.output.data()) v = 0.2 * rng.normal();
  mp.temperature = 1.3;
  mp.epsilon = 0.02;

  const std::vector<PolicyPtr> policies = {
      no_ads_policy(),       max_ads_policy(),          uniform_policy(),
      static_policy({4, 6}), fatigue_policy({2, 0.2, 0.8, kFatigueScore}),
      softmax_policy(sp),    mlp_softmax_policy(mp)};
  for (const auto& policy : policies) {
    const std::string path = (dir / ("adload_policy_" + policy->kind() + ".json")).string();
    save_policy(path, *policy, kDefaults);
    const auto loaded = load_policy(path);
    CHECK(loaded.constraints_hash == kDefaults.hash());
    CHECK(loaded.policy->kind() == policy->kind());
    const auto original = policy->action_distribution(ctx_of(features, catalog));
    const auto restored = loaded.policy->action_distribution(ctx_of(features, catalog));
    REQUIRE(original.size() == restored.size());
    for (std::size_t i = 0; i < original.size(); ++i)
      CHECK(original[i] == doctest::Approx(restored[i]).epsilon(1e-12));
    std::remove(path.c_str());
  }

  ActionConstraints other{2, 3, true};
  CHECK(other.hash() != kDefaults.hash());
}

TEST_CASE("sampling matches probabilities for a skewed softmax") {
  const auto catalog = enumerate_actions(kDefaults, 0, std::nullopt);
  const auto features = zero_features();
  SoftmaxPolicyParams sp = SoftmaxPolicyParams::zeros(kContextDim, 1.0, 0.05);
  for (std::size_t i = 0; i < catalog.size(); ++i)
    sp.weights(static_cast<std::size_t>(catalog.action(i).to_bitmask()), kContextDim) =
        0.4 * static_cast<double>(i);
  const auto policy = softmax_policy(sp);
  const auto dist = policy->action_distribution(ctx_of(features, catalog));

  Rng rng(2718);
  const int n = 10000;
  std::vector<int> counts(catalog.size(), 0);
  for (int i = 0; i < n; ++i) ++counts[policy->sample(ctx_of(features, catalog), rng)];
  double chi2 = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = dist[i] * n;
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < chi_square_quantile(0.95, static_cast<int>(catalog.size()) - 1));
}

TEST_SUITE_END();
