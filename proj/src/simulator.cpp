#include "adload/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace adload {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void EnvironmentConfig::validate() const {
  constraints.validate();
  if (cohorts.empty()) throw config_error("EnvironmentConfig: no cohorts");
  double total = 0.0;
  for (const auto& c : cohorts) {
    if (c.weight < 0.0) throw config_error("EnvironmentConfig: negative cohort weight");
    if (!(c.profile.fatigue >= 0.0 && c.profile.fatigue <= 1.0))
      throw config_error("EnvironmentConfig: fatigue must be in [0,1]");
    if (!(c.profile.base_engagement > 0.0 && c.profile.ad_sensitivity > 0.0))
      throw config_error("EnvironmentConfig: engagement/sensitivity must be > 0");
    if (c.profile.language_index < 0 ||
        c.profile.language_index >= static_cast<int>(languages.size()))
      throw config_error("EnvironmentConfig: cohort language_index out of range");
    total += c.weight;
  }
  if (total <= 0.0) throw config_error("EnvironmentConfig: cohort weights sum to zero");
  if (languages.size() > 4) throw config_error("EnvironmentConfig: at most 4 languages");
  for (std::size_t k = 0; k + 1 < position_view_decay.size(); ++k)
    if (!(position_view_decay[k] > position_view_decay[k + 1]))
      throw config_error("EnvironmentConfig: position_view_decay must be strictly decreasing");
  for (double v : position_view_decay)
    if (!(v > 0.0 && v <= 1.0)) throw config_error("EnvironmentConfig: view decay out of (0,1]");
  for (double h : base_abandon_hazard)
    if (!(h >= 0.0 && h < 1.0)) throw config_error("EnvironmentConfig: hazard out of [0,1)");
  if (!(post_ad_abandon_multiplier > 1.0))
    throw config_error("EnvironmentConfig: post_ad_abandon_multiplier must be > 1");
  for (double p : {click_rate, install_rate, session_quit_given_abandon})
    if (!(p >= 0.0 && p <= 1.0)) throw config_error("EnvironmentConfig: probability out of [0,1]");
  if (session_length_pmf.empty())
    throw config_error("EnvironmentConfig: empty session_length_pmf");
  for (const auto& [m, p] : session_length_pmf)
    if (m < 1 || p < 0.0) throw config_error("EnvironmentConfig: bad session_length_pmf entry");
  if (!(minutes_per_subfeed > 0.0))
    throw config_error("EnvironmentConfig: minutes_per_subfeed must be > 0");
  if (constraints.min_position_difference >= kAdGapCap)
    throw config_error("EnvironmentConfig: min_position_difference must be < 9 (ad-gap cap)");
}

EnvironmentConfig default_environment() {
  EnvironmentConfig env;
  auto cohort = [](int lang, double fatigue, double engagement, double sensitivity, double weight,
                   double age, double logins, double inactivity, double genre, double clicks,
                   double imprs) {
    CohortSpec c;
    c.profile = {lang, fatigue, engagement, sensitivity, age, logins, inactivity, genre, clicks,
                 imprs};
    c.weight = weight;
    return c;
  };
  env.cohorts = {
      cohort(0, 0.32, 1.00, 0.1, 0.35, 320, 6.5, 0.5, 0.80, 3.0, 60.0),
      cohort(1, 0.50, 0.90, 0.5, 0.30, 210, 4.0, 1.5, 0.65, 2.0, 45.0),
      cohort(2, 0.75, 0.80, 2.0, 0.20, 120, 2.0, 3.0, 0.50, 1.0, 30.0),
      cohort(3, 0.90, 0.70, 4.0, 0.15, 45, 1.0, 5.0, 0.35, 0.5, 15.0),
  };
  return env;
}

EnvironmentConfig oracle_environment() {
  EnvironmentConfig env = default_environment();
  env.cohorts = {env.cohorts[0], env.cohorts[3]};
  env.cohorts[0].weight = 0.6;
  env.cohorts[1].weight = 0.4;
  env.session_length_pmf = {{1, 0.5}, {2, 0.5}};
  env.session_quit_given_abandon = 1.0;  // sessions are single runs
  // Softer hazards and rarer click/install events keep the per-record reward
  // variance small enough for tight single-run estimator tolerances.
  env.base_abandon_hazard = {0.006, 0.006, 0.006, 0.006, 0.006};
  env.click_rate = 0.2;
  env.install_rate = 0.1;
  return env;
}

namespace detail {

std::array<double, kSubfeedLength> SubfeedModel::present() const {
  std::array<double, kSubfeedLength> p{};
  double alive = 1.0;
  for (int k = 0; k < kSubfeedLength; ++k) {
    p[k] = alive;
    alive *= 1.0 - hazard[k];
  }
  return p;
}

double SubfeedModel::survive_probability() const {
  double alive = 1.0;
  for (int k = 0; k < kSubfeedLength; ++k) alive *= 1.0 - hazard[k];
  return alive;
}

void SubfeedModel::expected_local_signals(SatSignals& sat, AdsSignals& ads) const {
  const auto pres = present();
  double impressions = 0.0, engagements = 0.0, depth = 0.0;
  for (int k = 0; k < kSubfeedLength; ++k) {
    depth += pres[k];
    if (is_ad[k])
      impressions += pres[k] * view[k];
    else
      engagements += pres[k] * view[k] * engage_prob;
  }
  // P(at least one video play / skip): condition on the consumed prefix.
  double p_no_play = 0.0, p_no_skip = 0.0;
  double no_play_prefix = 1.0, no_skip_prefix = 1.0;
  double alive = 1.0;
  for (int k = 0; k < kSubfeedLength; ++k) {
    if (!is_ad[k]) {
      no_play_prefix *= 1.0 - view[k] * play_prob;
      no_skip_prefix *= 1.0 - view[k] * play_prob * skip_prob;
    }
    const double p_abandon_here = alive * hazard[k];
    p_no_play += p_abandon_here * no_play_prefix;
    p_no_skip += p_abandon_here * no_skip_prefix;
    alive *= 1.0 - hazard[k];
  }
  p_no_play += alive * no_play_prefix;
  p_no_skip += alive * no_skip_prefix;

  sat.engagements = engagements;
  sat.video_play = 1.0 - p_no_play;
  sat.video_skip = 1.0 - p_no_skip;
  sat.pct_video_watch = watch_frac * (1.0 - p_no_play);
  sat.feed_depth = depth;
  ads.impressions = impressions;
  ads.clicks = impressions * click_rate;
  ads.installs = impressions * click_rate * install_rate;
}

SubfeedModel make_subfeed_model(const UserProfile& profile, const FeedAction& action,
                                std::optional<int> ad_gap, const EnvironmentConfig& config) {
  SubfeedModel m;
  const int n_ads = action.ad_count();
  const double view_scale = clamp01(1.0 - config.view_fatigue_drop * profile.fatigue);
  const double hazard_scale = 1.0 + config.hazard_fatigue_rise * profile.fatigue;
  // The excess multiplier scales with sensitivity, so the post-ad hazard is
  // elevated for every cohort whenever the configured multiplier exceeds 1.
  const double post_ad =
      1.0 + (config.post_ad_abandon_multiplier - 1.0) * profile.ad_sensitivity;
  for (int k = 0; k < kSubfeedLength; ++k) {
    m.is_ad[k] = action.has_slot(k + 1);
    m.view[k] = clamp01(config.position_view_decay[k] * view_scale);
    const bool after_ad = (k == 0) ? (ad_gap && *ad_gap == 0) : m.is_ad[k - 1];
    m.hazard[k] =
        clamp01(config.base_abandon_hazard[k] * hazard_scale * (after_ad ? post_ad : 1.0));
  }
  m.engage_prob = clamp01(config.engage_rate * profile.base_engagement *
                          (1.0 - config.engage_ad_drop * profile.ad_sensitivity * n_ads));
  m.play_prob = clamp01(config.video_play_rate);
  m.skip_prob = clamp01(config.video_skip_rate *
                        (1.0 + config.video_skip_ad_rise * profile.ad_sensitivity * n_ads));
  m.watch_frac = clamp01(config.watch_base *
                       (1.0 - config.watch_ad_drop * profile.ad_sensitivity * n_ads));
  m.click_rate = config.click_rate;
  m.install_rate = config.install_rate;
  return m;
}

}  // namespace detail

UserProfile sample_user(const EnvironmentConfig& config, Rng& rng) {
  config.validate();
  std::vector<double> weights;
  weights.reserve(config.cohorts.size());
  for (const auto& c : config.cohorts) weights.push_back(c.weight);
  return config.cohorts[rng.categorical(weights)].profile;
}

FetchOutcome simulate_fetch(const UserProfile& user, SessionState& state, const FeedAction& action,
                            const EnvironmentConfig& config, Rng& rng) {
  if (state.session_over) throw std::invalid_argument("simulate_fetch: session already over");
  if (!validate_action(action, config.constraints, state.ad_gap))
    throw std::invalid_argument("simulate_fetch: action invalid for current state");

  const detail::SubfeedModel model =
      detail::make_subfeed_model(user, action, state.ad_gap, config);
  FetchOutcome out;
  bool any_play = false, any_skip = false;
  int consumed = 0;
  for (int k = 0; k < kSubfeedLength; ++k) {
    ++consumed;
    const bool viewed = rng.bernoulli(model.view[k]);
    if (model.is_ad[k] && viewed) {
      out.ads.impressions += 1.0;
      if (rng.bernoulli(model.click_rate)) {
        out.ads.clicks += 1.0;
        if (rng.bernoulli(model.install_rate)) out.ads.installs += 1.0;
      }
    } else if (!model.is_ad[k] && viewed) {
      if (rng.bernoulli(model.engage_prob)) out.sat.engagements += 1.0;
      if (rng.bernoulli(model.play_prob)) {
        any_play = true;
        if (rng.bernoulli(model.skip_prob)) any_skip = true;
      }
    }
    if (rng.bernoulli(model.hazard[k])) {
      out.abandoned = true;
      out.session_quit = rng.bernoulli(config.session_quit_given_abandon);
      break;
    }
  }
  out.consumed_slots = consumed;
  out.sat.video_play = any_play ? 1.0 : 0.0;
  out.sat.video_skip = any_skip ? 1.0 : 0.0;
  out.sat.pct_video_watch = any_play ? model.watch_frac : 0.0;
  out.sat.feed_depth = static_cast<double>(consumed);
  out.sat.rank_i = state.run_fetch_index() + 1;
  out.sat.rank_d = out.sat.rank_i;  // finalized when the run ends
  out.sat.session_minutes = config.minutes_per_subfeed * state.subfeeds_served();

  // Session-state bookkeeping.
  state.session_engagements += out.sat.engagements;
  state.session_ad_impressions += out.ads.impressions;
  state.session_clicks += out.ads.clicks;
  if (state.fetch_ad_counts.empty() ||
      static_cast<int>(state.fetch_ad_counts.size()) <= state.fetch_index)
    state.fetch_ad_counts.push_back(0);
  state.fetch_ad_counts.back() += action.ad_count();

  if (out.abandoned) {
    if (out.session_quit) {
      state.session_over = true;
    } else {
      // User leaves this feed and enters a fresh one: new run, next fetch.
      state.fetch_index += 1;
      state.subfeed_index = 0;
      state.run_start_fetch = state.fetch_index;
      state.ad_gap.reset();
      state.prev_ad_bitmask = 0;
      if (state.fetch_index >= state.max_fetches) state.session_over = true;
    }
    return out;
  }

  // Survived all 5 posts: advance the gap and sub-feed/fetch counters.
  if (action.ad_count() > 0)
    state.ad_gap = kSubfeedLength - action.slots.back();
  else if (state.ad_gap)
    state.ad_gap = std::min(*state.ad_gap + kSubfeedLength, kAdGapCap);
  state.prev_ad_bitmask = action.to_bitmask();
  if (state.subfeed_index == 0) {
    state.subfeed_index = 1;
  } else {
    state.subfeed_index = 0;
    state.fetch_index += 1;
    if (state.fetch_index >= state.max_fetches) state.session_over = true;
  }
  return out;
}

std::vector<double> build_context(const UserProfile& user, const SessionState& state,
                                  const EnvironmentConfig& config) {
  std::vector<double> x(kContextDim, 0.0);
  x[kHourEngagements] = state.session_engagements;
  x[kDayEngagements] = user.logins_yesterday * 0.5 + state.session_engagements;
  x[kLoginsYesterday] = user.logins_yesterday;
  x[kAvgInactivityDaysWeek] = user.avg_inactivity_days_week;
  x[kFatigueScore] = user.fatigue;
  x[kPlatformAgeDays] = user.platform_age_days;
  if (user.language_index >= 0 && user.language_index < 4)
    x[kLanguageHindi + static_cast<std::size_t>(user.language_index)] = 1.0;
  x[kGenreAffinity] = user.genre_affinity;
  x[kDistinctGenres] = 3.0;
  x[kAvgPostAgeDays] = 2.0;
  for (int s = 1; s <= kSubfeedLength; ++s)
    x[kPrevAdSlot1 + static_cast<std::size_t>(s - 1)] =
        (state.prev_ad_bitmask & (1 << (s - 1))) ? 1.0 : 0.0;
  x[kAdGap] = state.ad_gap ? static_cast<double>(*state.ad_gap) : -1.0;
  auto avg_last = [&](std::size_t window) {
    // Average over completed fetches only; the in-flight fetch entry (present
    // when deciding sub-feed 1) is excluded.
    std::size_t complete = state.fetch_ad_counts.size();
    if (complete > static_cast<std::size_t>(state.fetch_index))
      complete = static_cast<std::size_t>(state.fetch_index);
    if (complete == 0) return 0.0;
    const std::size_t take = std::min(window, complete);
    double total = 0.0;
    for (std::size_t i = complete - take; i < complete; ++i)
      total += state.fetch_ad_counts[i];
    return total / static_cast<double>(take);
  };
  x[kAvgAdLoadLast3] = avg_last(3);
  x[kAvgAdLoadLast5] = avg_last(5);
  x[kSessionAdImpressions] = state.session_ad_impressions;
  x[kSessionMinutes] = config.minutes_per_subfeed * state.subfeeds_served();
  x[kClicks7d] = user.clicks_7d + state.session_clicks;
  x[kImpressions7d] = user.impressions_7d + state.session_ad_impressions;
  return x;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int sample_session_length(const EnvironmentConfig& config, Rng& rng) {
  std::vector<double> weights;
  weights.reserve(config.session_length_pmf.size());
  for (const auto& [m, p] : config.session_length_pmf) weights.push_back(p);
  return config.session_length_pmf[rng.categorical(weights)].first;
}

void finalize_run(std::vector<LoggedRecord>& records, std::size_t run_begin, int rank_d,
                  bool feed_quit, bool session_quit) {
  for (std::size_t i = run_begin; i < records.size(); ++i) {
    records[i].sat_signals.rank_d = rank_d;
    records[i].sat_signals.feed_abandoned = feed_quit ? 1.0 : 0.0;
    records[i].sat_signals.session_abandoned = session_quit ? 1.0 : 0.0;
  }
}

}  // namespace

std::vector<LoggedRecord> generate_log(const Policy& policy, const EnvironmentConfig& config,
                                       std::size_t n_users, std::uint64_t seed,
                                       std::size_t max_records) {
  config.validate();
  CatalogCache catalogs(config.constraints);
  std::vector<LoggedRecord> records;
  Rng root(seed ^ config.seed * 0x9e3779b97f4a7c15ULL);
  std::int64_t clock_ms = 1700000000000LL;

  for (std::size_t u = 0; u < n_users; ++u) {
    if (max_records > 0 && records.size() >= max_records) break;
    Rng rng = root.derive(u + 1);
    const UserProfile user = sample_user(config, rng);
    SessionState state;
    state.max_fetches = sample_session_length(config, rng);
    const std::string user_id = "u" + std::to_string(u);
    const std::string session_id = user_id + "-s0";

    std::size_t run_begin = records.size();
    while (!state.session_over) {
      const CatalogKey key{state.subfeed_index, state.ad_gap};
      const ActionCatalog& catalog = catalogs.get(key);
      const std::vector<double> context = build_context(user, state, config);
      DecisionContext dctx{context, &catalog, state.run_fetch_index()};
      const auto dist = policy.action_distribution(dctx);
      double u01 = rng.uniform();
      std::size_t action_id = dist.size() - 1;
      for (std::size_t i = 0; i < dist.size(); ++i) {
        u01 -= dist[i];
        if (u01 < 0.0) {
          action_id = i;
          break;
        }
      }
      const FeedAction& action = catalog.action(action_id);
      const FetchOutcome outcome = simulate_fetch(user, state, action, config, rng);

      LoggedRecord rec;
      rec.context = context;
      rec.action_id = action_id;
      rec.catalog_key = key;
      rec.propensity = dist[action_id];
      rec.sat_signals = outcome.sat;
      rec.ads_signals = outcome.ads;
      rec.user_id = user_id;
      rec.session_id = session_id;
      rec.timestamp_ms = clock_ms;
      clock_ms += 200;
      records.push_back(std::move(rec));

      if (outcome.abandoned) {
        const int rank_d = records.back().sat_signals.rank_i;
        finalize_run(records, run_begin, rank_d, !outcome.session_quit, outcome.session_quit);
        run_begin = records.size();
      } else if (state.session_over) {
        finalize_run(records, run_begin, records.back().sat_signals.rank_i, false, false);
        run_begin = records.size();
      }
    }

    // Delayed labels for the scalarization fit path.
    double session_sat_index = 0.0;
    std::size_t session_records = 0;
    for (std::size_t i = records.size(); i-- > 0;) {
      if (records[i].session_id != session_id) break;
      ++session_records;
      const auto& s = records[i].sat_signals;
      session_sat_index += s.engagements + s.video_play - s.video_skip -
                           (s.feed_abandoned + 2.0 * s.session_abandoned);
    }
    if (session_records > 0) session_sat_index /= static_cast<double>(session_records);
    const int retention =
        rng.bernoulli(sigmoid(config.retention_bias + config.retention_slope * session_sat_index))
            ? 1
            : 0;
    for (std::size_t i = records.size() - session_records; i < records.size(); ++i) {
      records[i].retention_label = retention;
      const auto& ads = records[i].ads_signals;
      const double rev = config.revenue_per_impression * ads.impressions +
                         config.revenue_per_click * ads.clicks +
                         config.revenue_per_install * ads.installs +
                         std::abs(config.revenue_noise * rng.normal());
      records[i].revenue_label = rev;
    }
  }
  return records;
}

}  // namespace adload
