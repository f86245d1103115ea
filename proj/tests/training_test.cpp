#include "adload/policy_training.hpp"

#include <cmath>

#include "adload/simulator.hpp"
#include "adload/stats.hpp"
#include "doctest.h"

using namespace adload;

namespace {

const ActionConstraints kDefaults{};

// One-context bandit over the two-action catalog (sub-feed 1, gap 0), with
// known per-action rewards. Best action by enumeration: action 1.
std::vector<LoggedRecord> one_context_bandit(CatalogCache& catalogs, std::size_t n, Rng& rng) {
  const CatalogKey key{1, 0};
  REQUIRE(catalogs.get(key).size() == 2);
  std::vector<LoggedRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    LoggedRecord r;
    r.context = std::vector<double>(kContextDim, 0.0);
    r.catalog_key = key;
    r.action_id = rng.bernoulli(0.5) ? 1 : 0;
    r.propensity = 0.5;
    r.sat_signals.engagements = r.action_id == 1 ? 1.0 : 0.2;  // noiseless rewards
    r.user_id = "u" + std::to_string(i % 64);
    r.session_id = "s";
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("dm_policy picks the argmax with lowest-id tie breaking") {
  CatalogCache catalogs(kDefaults);

  struct FixedModel final : RewardModel {
    std::vector<double> values;
    CatalogCache* cache;
    std::string kind() const override { return "fixed"; }
    double predict(std::span<const double>, const FeedAction& a,
                   const CatalogKey& key) const override {
      return values.at(*cache->get(key).find(a));
    }
  };
  auto model = std::make_shared<FixedModel>();
  model->cache = &catalogs;

  const auto& catalog = catalogs.get(CatalogKey{1, 0});
  const std::vector<double> features(kContextDim, 0.0);
  const DecisionContext ctx{features, &catalog, 0};

  model->values = {0.7, 0.7};  // tie -> lowest action id
  CHECK(dm_policy(model)->probability(ctx, 0) == 1.0);
  model->values = {0.2, 0.8};
  CHECK(dm_policy(model)->probability(ctx, 1) == 1.0);
}

TEST_CASE("IPW training concentrates on the truly best action of a one-context bandit") {
  CatalogCache catalogs(kDefaults);
  Rng rng(19);
  const auto records = one_context_bandit(catalogs, 4000, rng);
  RewardConfig reward;
  reward.mix.beta = 1.0;
  reward.weights.sat_weights = {1.0, 0, 0, 0, 0, 0, 0};

  TrainingConfig cfg;
  cfg.epochs = 120;
  cfg.learning_rate = 0.5;
  cfg.entropy_coefficient = 0.001;
  cfg.epsilon = 0.01;
  const auto result =
      train_policy(records, TrainObjective::kIPW, reward, nullptr, catalogs, cfg);
  const auto& catalog = catalogs.get(CatalogKey{1, 0});
  const std::vector<double> features(kContextDim, 0.0);
  const double p_best = result.policy->probability({features, &catalog, 0}, 1);
  CHECK(p_best >= 0.9);
  CHECK(result.best_epoch >= 0);
}

TEST_CASE("DR training matches IPW on the same bandit and stays stochastic") {
  CatalogCache catalogs(kDefaults);
  Rng rng(23);
  const auto records = one_context_bandit(catalogs, 4000, rng);
  RewardConfig reward;
  reward.mix.beta = 1.0;
  reward.weights.sat_weights = {1.0, 0, 0, 0, 0, 0, 0};

  TrainingConfig cfg;
  cfg.epochs = 120;
  cfg.learning_rate = 0.5;
  const auto result = train_policy(records, TrainObjective::kDR, reward, nullptr, catalogs, cfg);
  const auto& catalog = catalogs.get(CatalogKey{1, 0});
  const std::vector<double> features(kContextDim, 0.0);
  const auto dist = result.policy->action_distribution({features, &catalog, 0});
  CHECK(dist[1] >= 0.9);
  CHECK(dist[0] > 0.0);  // epsilon floor keeps full support
}

TEST_CASE("training is deterministic given the seed") {
  CatalogCache catalogs(kDefaults);
  Rng rng(29);
  const auto records = one_context_bandit(catalogs, 1000, rng);
  RewardConfig reward;
  reward.mix.beta = 1.0;
  TrainingConfig cfg;
  cfg.epochs = 20;
  const auto a = train_policy(records, TrainObjective::kDR, reward, nullptr, catalogs, cfg);
  const auto b = train_policy(records, TrainObjective::kDR, reward, nullptr, catalogs, cfg);
  const auto& catalog = catalogs.get(CatalogKey{1, 0});
  const std::vector<double> features(kContextDim, 0.0);
  const auto da = a.policy->action_distribution({features, &catalog, 0});
  const auto db = b.policy->action_distribution({features, &catalog, 0});
  for (std::size_t i = 0; i < da.size(); ++i) CHECK(da[i] == db[i]);
}

TEST_CASE("mlp policy head trains on the one-context bandit too") {
  CatalogCache catalogs(kDefaults);
  Rng rng(31);
  const auto records = one_context_bandit(catalogs, 2000, rng);
  RewardConfig reward;
  reward.mix.beta = 1.0;
  reward.weights.sat_weights = {1.0, 0, 0, 0, 0, 0, 0};
  TrainingConfig cfg;
  cfg.policy_kind = "mlp_softmax";
  cfg.mlp_hidden = 8;
  cfg.epochs = 150;
  cfg.learning_rate = 0.5;
  const auto result = train_policy(records, TrainObjective::kIPW, reward, nullptr, catalogs, cfg);
  const auto& catalog = catalogs.get(CatalogKey{1, 0});
  const std::vector<double> features(kContextDim, 0.0);
  CHECK(result.policy->probability({features, &catalog, 0}, 1) >= 0.85);
}

TEST_CASE("dm policy over the oracle reward model beats every baseline's true value") {
  EnvironmentConfig env = oracle_environment();
  const RewardConfig reward;
  const auto oracle = make_oracle_reward_model(env, reward.weights, reward.discount, reward.mix);
  const auto dm = dm_policy(oracle);
  OraclePrecision precision;
  precision.min_sessions = 50000;
  precision.max_sessions = 50000;
  const auto dm_value =
      true_policy_value(*dm, env, reward.weights, reward.discount, reward.mix, precision);
  for (const auto& baseline : {no_ads_policy(), max_ads_policy(), uniform_policy(),
                               static_policy({3, 5}), fatigue_policy({})}) {
    const auto v =
        true_policy_value(*baseline, env, reward.weights, reward.discount, reward.mix);
    CAPTURE(baseline->kind());
    CHECK(dm_value.v_total + 3.0 * dm_value.mc_std_error >= v.v_total);
  }
}

TEST_CASE("beta endpoints steer the learned ad load relative to uniform") {
  EnvironmentConfig env = oracle_environment();
  const auto records = generate_log(*uniform_policy(), env, 6000, 37);
  CatalogCache catalogs(env.constraints);

  TrainingConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 0.3;
  cfg.patience = 15;

  const auto uniform_value = true_policy_value(*uniform_policy(), env, RewardConfig{}.weights,
                                               RewardConfig{}.discount, RewardConfig{}.mix);

  RewardConfig sat_only;
  sat_only.mix.beta = 1.0;
  const auto sat_policy =
      train_policy(records, TrainObjective::kDR, sat_only, nullptr, catalogs, cfg);
  OraclePrecision precision;
  precision.min_sessions = 30000;
  precision.max_sessions = 30000;
  const auto sat_value = true_policy_value(*sat_policy.policy, env, sat_only.weights,
                                           sat_only.discount, sat_only.mix, precision);
  CHECK(sat_value.expected_ad_count < uniform_value.expected_ad_count);

  RewardConfig ads_only;
  ads_only.mix.beta = 0.0;
  const auto ads_policy =
      train_policy(records, TrainObjective::kDR, ads_only, nullptr, catalogs, cfg);
  const auto ads_value = true_policy_value(*ads_policy.policy, env, ads_only.weights,
                                           ads_only.discount, ads_only.mix, precision);
  CHECK(ads_value.expected_ad_count > uniform_value.expected_ad_count);
}

TEST_SUITE_END();
