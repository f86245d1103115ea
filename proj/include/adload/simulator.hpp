#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adload/action_space.hpp"
#include "adload/context_schema.hpp"
#include "adload/dataset.hpp"
#include "adload/estimators.hpp"
#include "adload/policies.hpp"
#include "adload/rewards.hpp"
#include "adload/rng.hpp"

namespace adload {

// Ad-gap values beyond this never affect the catalog or the hazards, so the
// state tracks min(gap, cap).
inline constexpr int kAdGapCap = 9;

struct UserProfile {
  int language_index = 0;       // into EnvironmentConfig::languages
  double fatigue = 0.0;         // [0,1]
  double base_engagement = 1.0; // > 0
  double ad_sensitivity = 1.0;  // > 0, multiplies per-ad dissatisfaction
  // Static history features surfaced in the context vector.
  double platform_age_days = 0.0;
  double logins_yesterday = 0.0;
  double avg_inactivity_days_week = 0.0;
  double genre_affinity = 0.0;
  double clicks_7d = 0.0;
  double impressions_7d = 0.0;
};

struct CohortSpec {
  UserProfile profile;
  double weight = 1.0;
};

// Ground-truth behavioral model. All magnitudes are synthetic configuration
// chosen to reproduce the qualitative orderings (position-dependent
// abandonment, ad-load/satisfaction trade-off, cohort heterogeneity).
struct EnvironmentConfig {
  std::vector<std::string> languages{"Hindi", "Tamil", "Telugu", "Kannada"};
  std::vector<CohortSpec> cohorts;

  std::array<double, kSubfeedLength> position_view_decay{0.95, 0.88, 0.80, 0.72, 0.65};
  double view_fatigue_drop = 0.35;  // view prob scaled by (1 - drop * fatigue)

  std::array<double, kSubfeedLength> base_abandon_hazard{0.012, 0.012, 0.012, 0.012, 0.012};
  double hazard_fatigue_rise = 1.0;          // hazard scaled by (1 + rise * fatigue)
  double post_ad_abandon_multiplier = 4.0;   // > 1, applied (with ad_sensitivity)
                                             // at the slot right after an ad

  double click_rate = 0.45;    // P(click | impression)
  double install_rate = 0.25;  // P(install | click)

  double engage_rate = 0.06;
  double engage_ad_drop = 0.12;  // per ad, scaled by ad_sensitivity
  double video_play_rate = 0.5;
  double video_skip_rate = 0.10;
  double video_skip_ad_rise = 0.8;
  double watch_base = 0.60;
  double watch_ad_drop = 0.08;

  std::vector<std::pair<int, double>> session_length_pmf{{2, 0.2}, {3, 0.45}, {4, 0.35}};
  double session_quit_given_abandon = 0.4;
  double minutes_per_subfeed = 0.5;

  double retention_bias = -0.5;
  double retention_slope = 0.6;
  double revenue_per_impression = 0.4;
  double revenue_per_click = 1.5;
  double revenue_per_install = 6.0;
  double revenue_noise = 0.05;

  ActionConstraints constraints;
  std::uint64_t seed = 1;

  void validate() const;
};

// Defaults exercising all behaviors (mixed feed/session quits, 4 cohorts).
EnvironmentConfig default_environment();

// Compact two-cohort configuration with session quits only, so sessions are
// single runs: exact enumeration stays small and the oracle reward model is
// well defined from the context alone.
EnvironmentConfig oracle_environment();

// Mutable bookkeeping for one user session.
struct SessionState {
  int max_fetches = 1;          // sampled session length
  int fetch_index = 0;          // 0-based, global within session
  int subfeed_index = 0;        // 0 or 1 within the fetch
  int run_start_fetch = 0;      // fetch where the current consecutive run began
  std::optional<int> ad_gap;    // posts since the last served ad, capped
  int prev_ad_bitmask = 0;      // previous sub-feed's action
  bool session_over = false;

  // Context counters.
  double session_engagements = 0.0;
  double session_ad_impressions = 0.0;
  double session_clicks = 0.0;
  std::vector<int> fetch_ad_counts;  // ads per completed fetch

  int run_fetch_index() const { return fetch_index - run_start_fetch; }
  int subfeeds_served() const { return fetch_index * 2 + subfeed_index; }
};

namespace detail {

// Closed-form per-slot probabilities for one (profile, action, gap) sub-feed
// serve; single source of truth for both the sampler and the exact oracle.
struct SubfeedModel {
  std::array<double, kSubfeedLength> view{};
  std::array<double, kSubfeedLength> hazard{};
  std::array<bool, kSubfeedLength> is_ad{};
  double engage_prob = 0.0;
  double play_prob = 0.0;
  double skip_prob = 0.0;   // joint view*play*skip handled by callers
  double watch_frac = 0.0;
  double click_rate = 0.0;
  double install_rate = 0.0;

  // P(user consumes slot k), i.e. no abandonment strictly before it.
  std::array<double, kSubfeedLength> present() const;
  double survive_probability() const;

  // Expected per-record signals excluding the abandonment lambdas;
  // unconditional over the within-sub-feed abandonment outcome.
  void expected_local_signals(SatSignals& sat, AdsSignals& ads) const;
};

SubfeedModel make_subfeed_model(const UserProfile& profile, const FeedAction& action,
                                std::optional<int> ad_gap, const EnvironmentConfig& config);

}  // namespace detail

UserProfile sample_user(const EnvironmentConfig& config, Rng& rng);

struct FetchOutcome {
  SatSignals sat;        // rank fields filled by run finalization
  AdsSignals ads;
  bool abandoned = false;
  bool session_quit = false;
  int consumed_slots = 0;
};

// Serves one 5-post sub-feed (the independent bandit decision unit) and
// advances the session state, run bookkeeping included.
FetchOutcome simulate_fetch(const UserProfile& user, SessionState& state, const FeedAction& action,
                            const EnvironmentConfig& config, Rng& rng);

std::vector<double> build_context(const UserProfile& user, const SessionState& state,
                                  const EnvironmentConfig& config);

// Simulates n_users full sessions under the given (logging) policy; every
// sub-feed serve emits one record with its exact sampling propensity, and
// rank_d / abandonment flags are back-filled when each run ends. A nonzero
// max_records stops at the first session boundary past the cap, keeping the
// per-record distribution free of truncation artifacts.
std::vector<LoggedRecord> generate_log(const Policy& policy, const EnvironmentConfig& config,
                                       std::size_t n_users, std::uint64_t seed,
                                       std::size_t max_records = 0);

enum class OracleMethod { kExactEnumeration, kMonteCarlo };

struct OraclePrecision {
  double target_std_error = 0.002;  // on v_total, Monte Carlo only
  std::size_t max_sessions = 400000;
  std::size_t min_sessions = 20000;
  std::uint64_t seed = 99;
  bool force_monte_carlo = false;
};

struct TruePolicyValue {
  double v_sat = 0.0;
  double v_ads = 0.0;
  double v_total = 0.0;
  double expected_ad_count = 0.0;
  double mc_std_error = 0.0;      // on v_total; 0 for exact enumeration
  double mc_std_error_sat = 0.0;
  double mc_std_error_ads = 0.0;
  OracleMethod method = OracleMethod::kExactEnumeration;
  bool precision_reached = true;
};

// The bandit estimand the off-policy estimators target: record states are
// visited under the uniform logging policy, the evaluated policy reweights
// the immediate decision, and the run continues under logging behavior.
// Exact enumeration for policies free of dynamic context, Monte Carlo over
// logged states (with exact per-state values) otherwise.
TruePolicyValue true_policy_value(const Policy& policy, const EnvironmentConfig& config,
                                  const RewardWeights& weights, const DiscountParams& discount,
                                  const RewardMixConfig& mix,
                                  const OraclePrecision& precision = {});

// Exact E[R | context, action] under the environment + uniform logging
// behavior; requires an oracle-friendly config (session quits only, cohorts
// identifiable from language + fatigue).
RewardModelPtr make_oracle_reward_model(const EnvironmentConfig& config,
                                        const RewardWeights& weights,
                                        const DiscountParams& discount,
                                        const RewardMixConfig& mix);

}  // namespace adload
