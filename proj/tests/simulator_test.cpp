#include "adload/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adload/stats.hpp"
#include "doctest.h"

using namespace adload;

namespace {

EnvironmentConfig no_hazard_environment() {
  // One cohort, one fetch, no abandonment, no videos: per-record values are
  // hand-computable.
  EnvironmentConfig env = default_environment();
  env.cohorts = {env.cohorts[0]};
  env.cohorts[0].profile.fatigue = 0.0;
  env.cohorts[0].profile.base_engagement = 1.0;
  env.cohorts[0].profile.ad_sensitivity = 1.0;
  env.base_abandon_hazard = {0.0, 0.0, 0.0, 0.0, 0.0};
  env.video_play_rate = 0.0;
  env.session_length_pmf = {{1, 1.0}};
  env.session_quit_given_abandon = 1.0;
  return env;
}

}  // namespace

TEST_SUITE_BEGIN("simulator");

TEST_CASE("sample_user: point mass, mixture shares, determinism") {
  EnvironmentConfig env = default_environment();
  env.cohorts = {env.cohorts[2]};
  Rng rng(3);
  for (int i = 0; i < 10; ++i)
    CHECK(sample_user(env, rng).ad_sensitivity == env.cohorts[0].profile.ad_sensitivity);

  EnvironmentConfig two = default_environment();
  two.cohorts = {two.cohorts[0], two.cohorts[3]};
  two.cohorts[0].weight = 0.5;
  two.cohorts[1].weight = 0.5;
  Rng rng2(5);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    if (sample_user(two, rng2).language_index == two.cohorts[0].profile.language_index) ++first;
  // Binomial 3-sigma band around n/2.
  CHECK(std::abs(first - n / 2) < 3.0 * std::sqrt(n * 0.25));

  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i)
    CHECK(sample_user(two, a).fatigue == sample_user(two, b).fatigue);
}

TEST_CASE("simulate_fetch: zero-ad action yields zero ads signals") {
  EnvironmentConfig env = default_environment();
  Rng rng(7);
  const UserProfile user = env.cohorts[0].profile;
  for (int i = 0; i < 200; ++i) {
    SessionState state;
    state.max_fetches = 2;
    const auto out = simulate_fetch(user, state, FeedAction{{}, 0}, env, rng);
    CHECK(out.ads.impressions == 0.0);
    CHECK(out.ads.clicks == 0.0);
    CHECK(out.ads.installs == 0.0);
  }
}

TEST_CASE("simulate_fetch rejects invalid actions") {
  EnvironmentConfig env = default_environment();
  Rng rng(8);
  SessionState state;
  state.max_fetches = 1;
  CHECK_THROWS_AS(
      (void)simulate_fetch(env.cohorts[0].profile, state, FeedAction{{1}, 0}, env, rng),
      std::invalid_argument);
}

TEST_CASE("neutral post-ad config leaves the abandonment hazard untouched") {
  EnvironmentConfig env = default_environment();
  env.post_ad_abandon_multiplier = 1.0;  // neutral edge, below the config gate
  UserProfile user = env.cohorts[0].profile;
  user.ad_sensitivity = 1.0;
  const auto with_ad =
      detail::make_subfeed_model(user, FeedAction{{2}, 0}, std::nullopt, env);
  const auto without =
      detail::make_subfeed_model(user, FeedAction{{}, 0}, std::nullopt, env);
  for (int k = 0; k < kSubfeedLength; ++k) CHECK(with_ad.hazard[k] == without.hazard[k]);
}

TEST_CASE("post-ad abandonment spike shows up in 100k Monte-Carlo fetches") {
  EnvironmentConfig env = default_environment();
  const UserProfile user = env.cohorts[1].profile;
  Rng rng(11);
  // P(abandon at slot 3 | ad at slot 2) vs the no-ad action, measured only on
  // users who reached slot 3.
  std::size_t reached_ad = 0, abandoned_ad = 0, reached_no = 0, abandoned_no = 0;
  for (int i = 0; i < 100000; ++i) {
    for (bool with_ad : {true, false}) {
      SessionState state;
      state.max_fetches = 1;
      const FeedAction action = with_ad ? FeedAction{{2}, 0} : FeedAction{{}, 0};
      const auto out = simulate_fetch(user, state, action, env, rng);
      const bool reached = out.consumed_slots >= 3;
      const bool abandoned_at_3 = out.abandoned && out.consumed_slots == 3;
      if (with_ad) {
        reached_ad += reached;
        abandoned_ad += abandoned_at_3;
      } else {
        reached_no += reached;
        abandoned_no += abandoned_at_3;
      }
    }
  }
  const double p_ad = static_cast<double>(abandoned_ad) / reached_ad;
  const double p_no = static_cast<double>(abandoned_no) / reached_no;
  CHECK(p_ad > p_no);
}

TEST_CASE("generate_log: empty, deterministic, and propensity-consistent") {
  EnvironmentConfig env = default_environment();
  CHECK(generate_log(*uniform_policy(), env, 0, 1).empty());

  const auto log_a = generate_log(*uniform_policy(), env, 300, 17);
  const auto log_b = generate_log(*uniform_policy(), env, 300, 17);
  REQUIRE(log_a.size() == log_b.size());

  const auto dir = std::filesystem::temp_directory_path();
  const std::string path_a = (dir / "adload_sim_a.jsonl").string();
  const std::string path_b = (dir / "adload_sim_b.jsonl").string();
  write_log(path_a, log_a, env.constraints);
  write_log(path_b, log_b, env.constraints);
  std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);  // byte-identical given the seed
  std::remove(path_a.c_str());
  std::remove(path_b.c_str());

  CatalogCache catalogs(env.constraints);
  for (const auto& r : log_a) {
    const auto& catalog = catalogs.get(r.catalog_key);
    CHECK(r.action_id < catalog.size());
    CHECK(r.propensity == doctest::Approx(1.0 / catalog.size()).epsilon(1e-12));
    CHECK(r.sat_signals.rank_i <= r.sat_signals.rank_d);
  }
}

TEST_CASE("uniform logs pass both propensity tests at scale") {
  EnvironmentConfig env = default_environment();
  const auto log = generate_log(*uniform_policy(), env, 20000, 23);
  CatalogCache catalogs(env.constraints);
  const auto report = validate_propensities(log, catalogs, 0.05, 0.05, 7);
  CHECK(report.arithmetic_pass);
  CHECK(report.harmonic_pass);
}

TEST_CASE("true value of the no-ads policy has exactly zero ads reward") {
  EnvironmentConfig env = oracle_environment();
  const RewardConfig reward;
  const auto value =
      true_policy_value(*no_ads_policy(), env, reward.weights, reward.discount, reward.mix);
  CHECK(value.method == OracleMethod::kExactEnumeration);
  CHECK(value.v_ads == 0.0);
  CHECK(value.expected_ad_count == 0.0);
}

TEST_CASE("hand-built micro-environment matches exact enumeration to 1e-9") {
  const EnvironmentConfig env = no_hazard_environment();
  const RewardConfig reward;

  // With no hazards and one fetch, every record survives all five slots:
  // expected signals are plain sums over slots.
  const UserProfile& user = env.cohorts[0].profile;
  auto slot_view = [&](int k) { return env.position_view_decay[static_cast<std::size_t>(k)]; };
  auto expected_record_value = [&](const FeedAction& action) {
    const int n_ads = action.ad_count();
    const double engage =
        env.engage_rate * user.base_engagement * (1.0 - env.engage_ad_drop * n_ads);
    double impressions = 0.0, engagements = 0.0;
    for (int k = 0; k < kSubfeedLength; ++k) {
      if (action.has_slot(k + 1))
        impressions += slot_view(k);
      else
        engagements += slot_view(k) * engage;
    }
    const double sat = reward.weights.sat_weights[0] * engagements +
                       reward.weights.sat_weights[3] * 5.0;  // feed depth
    const double ads = reward.weights.ads_weights[0] * impressions +
                       reward.weights.ads_weights[1] * impressions * env.click_rate +
                       reward.weights.ads_weights[2] * impressions * env.click_rate *
                           env.install_rate;
    return std::pair{sat, ads};
  };

  // Uniform policy over both sub-feed catalogs; enumerate the four-record
  // session by hand (sub-feed 0 catalog, then sub-feed 1 given the gap).
  CatalogCache catalogs(env.constraints);
  const auto& cat0 = catalogs.get(CatalogKey{0, std::nullopt});
  double sat_sum = 0.0, ads_sum = 0.0, n_records = 0.0;
  for (std::size_t a0 = 0; a0 < cat0.size(); ++a0) {
    const double p0 = 1.0 / static_cast<double>(cat0.size());
    const auto [s0, v0] = expected_record_value(cat0.action(a0));
    sat_sum += p0 * s0;
    ads_sum += p0 * v0;
    // Next sub-feed's catalog depends on the gap left by action a0.
    std::optional<int> gap;
    if (cat0.action(a0).ad_count() > 0) gap = kSubfeedLength - cat0.action(a0).slots.back();
    const auto& cat1 = catalogs.get(CatalogKey{1, gap});
    for (std::size_t a1 = 0; a1 < cat1.size(); ++a1) {
      const double p1 = p0 / static_cast<double>(cat1.size());
      const auto [s1, v1] = expected_record_value(cat1.action(a1));
      sat_sum += p1 * s1;
      ads_sum += p1 * v1;
    }
  }
  n_records = 2.0;
  const double hand_v_sat = sat_sum / n_records;
  const double hand_v_ads = ads_sum / n_records;

  const auto value =
      true_policy_value(*uniform_policy(), env, reward.weights, reward.discount, reward.mix);
  CHECK(value.method == OracleMethod::kExactEnumeration);
  CHECK(value.v_sat == doctest::Approx(hand_v_sat).epsilon(1e-9));
  CHECK(value.v_ads == doctest::Approx(hand_v_ads).epsilon(1e-9));
}

TEST_CASE("exact enumeration agrees with forced Monte Carlo within 3 standard errors") {
  EnvironmentConfig env = oracle_environment();
  const RewardConfig reward;
  for (const auto& policy : {uniform_policy(), static_policy({2, 5}), fatigue_policy({})}) {
    const auto exact =
        true_policy_value(*policy, env, reward.weights, reward.discount, reward.mix);
    OraclePrecision precision;
    precision.force_monte_carlo = true;
    precision.min_sessions = 60000;
    precision.max_sessions = 60000;
    const auto mc =
        true_policy_value(*policy, env, reward.weights, reward.discount, reward.mix, precision);
    CAPTURE(policy->kind());
    CHECK(std::abs(mc.v_total - exact.v_total) <= 3.0 * mc.mc_std_error);
    CHECK(std::abs(mc.v_sat - exact.v_sat) <= 3.5 * mc.mc_std_error_sat);
    CHECK(std::abs(mc.v_ads - exact.v_ads) <= 3.5 * mc.mc_std_error_ads);
  }
}

TEST_CASE("cohort heterogeneity: higher ad sensitivity loses more satisfaction per ad") {
  EnvironmentConfig base = oracle_environment();
  const RewardConfig reward;
  auto sat_drop_for = [&](double sensitivity) {
    EnvironmentConfig env = base;
    env.cohorts = {env.cohorts[0]};
    env.cohorts[0].profile.ad_sensitivity = sensitivity;
    const auto zero =
        true_policy_value(*no_ads_policy(), env, reward.weights, reward.discount, reward.mix);
    const auto one =
        true_policy_value(*max_ads_policy(), env, reward.weights, reward.discount, reward.mix);
    return zero.v_sat - one.v_sat;
  };
  CHECK(sat_drop_for(2.0) > sat_drop_for(0.8));
}

TEST_CASE("ad count trade-off: more ads, more ads value, less satisfaction") {
  EnvironmentConfig env = oracle_environment();
  const RewardConfig reward;
  // Fixed-ad-count deterministic policies: 0 ads, 1 ad, 2 ads per fetch.
  const auto v0 =
      true_policy_value(*no_ads_policy(), env, reward.weights, reward.discount, reward.mix);
  const auto v1 = true_policy_value(*static_policy({2, 9}), env, reward.weights, reward.discount,
                                    reward.mix);
  const auto v2 = true_policy_value(*static_policy({2, 4}), env, reward.weights, reward.discount,
                                    reward.mix);
  CHECK(v0.expected_ad_count < v1.expected_ad_count);
  CHECK(v1.expected_ad_count < v2.expected_ad_count);
  CHECK(v0.v_ads < v1.v_ads);
  CHECK(v1.v_ads < v2.v_ads);
  CHECK(v0.v_sat > v1.v_sat);
  CHECK(v1.v_sat > v2.v_sat);
}

TEST_CASE("later ad positions do not hurt satisfaction") {
  // One fetch, one ad: moving the single ad from slot 2 to slot 4 holds the
  // delivered ad count fixed (0 ads on the second sub-feed either way).
  const RewardConfig reward;
  for (std::size_t cohort : {0u, 1u}) {
    EnvironmentConfig env = oracle_environment();
    env.cohorts = {env.cohorts[cohort]};
    env.session_length_pmf = {{1, 1.0}};
    const auto at2 = true_policy_value(*static_policy({2, 9}), env, reward.weights,
                                       reward.discount, reward.mix);
    const auto at4 = true_policy_value(*static_policy({4, 9}), env, reward.weights,
                                       reward.discount, reward.mix);
    CAPTURE(cohort);
    CHECK(at2.expected_ad_count == doctest::Approx(at4.expected_ad_count).epsilon(1e-9));
    CHECK(at4.v_sat >= at2.v_sat);
  }
}

TEST_CASE("build_context: fresh user, ad-load averages, schema length") {
  EnvironmentConfig env = default_environment();
  UserProfile fresh;  // all history zero
  SessionState state;
  state.max_fetches = 3;
  const auto x = build_context(fresh, state, env);
  REQUIRE(x.size() == kContextDim);
  CHECK(x[kHourEngagements] == 0.0);
  CHECK(x[kSessionAdImpressions] == 0.0);
  CHECK(x[kAdGap] == -1.0);
  CHECK(x[kSessionMinutes] == 0.0);

  // Two completed fetches with one ad each.
  state.fetch_index = 2;
  state.fetch_ad_counts = {1, 1};
  const auto x2 = build_context(fresh, state, env);
  CHECK(x2[kAvgAdLoadLast3] == doctest::Approx(1.0));
  CHECK(x2[kAvgAdLoadLast5] == doctest::Approx(1.0));

  state.ad_gap = 4;
  CHECK(build_context(fresh, state, env)[kAdGap] == 4.0);
}

TEST_CASE("retention and revenue labels are attached and well-formed") {
  EnvironmentConfig env = default_environment();
  const auto log = generate_log(*uniform_policy(), env, 500, 31);
  std::size_t retained = 0;
  for (const auto& r : log) {
    REQUIRE(r.retention_label.has_value());
    REQUIRE(r.revenue_label.has_value());
    CHECK(*r.revenue_label >= 0.0);
    retained += static_cast<std::size_t>(*r.retention_label);
  }
  CHECK(retained > 0);
  CHECK(retained < log.size());
}

TEST_SUITE_END();
