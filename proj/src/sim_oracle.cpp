#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "adload/simulator.hpp"
#include "adload/stats.hpp"

// True-value oracles. The estimand matches what the off-policy estimators
// converge to: record states drawn from the uniform logging policy's session
// distribution, the evaluated policy reweighting the immediate decision, and
// the run continuing under logging behavior. Expected per-record signals are
// closed-form; runs and sessions are handled by a small dynamic program over
// (fetch, sub-feed, ad-gap) states.

namespace adload {

namespace {

constexpr int kGapAbsent = -1;

int gap_code(std::optional<int> gap) { return gap ? *gap : kGapAbsent; }
std::optional<int> gap_from_code(int code) {
  return code == kGapAbsent ? std::nullopt : std::optional<int>(code);
}

int next_gap_code(int gap, const FeedAction& action) {
  if (action.ad_count() > 0) return kSubfeedLength - action.slots.back();
  if (gap == kGapAbsent) return kGapAbsent;
  return std::min(gap + kSubfeedLength, kAdGapCap);
}

// Distribution of how the current run ends, for a run positioned at decision
// (f, s, gap) and following the uniform logging policy. Deltas are fetch
// offsets from f.
struct RunEndDist {
  std::vector<double> feed_by_delta;  // P(feed-quit at fetch f + delta)
  double session_total = 0.0;         // P(session-quit, any fetch)
};

// Per-(cohort, session length) evaluation tables.
class CohortOracle {
 public:
  CohortOracle(const UserProfile& profile, int max_fetches, const EnvironmentConfig& config,
               const RewardWeights& weights, const DiscountParams& discount,
               CatalogCache& catalogs)
      : profile_(profile),
        max_fetches_(max_fetches),
        config_(config),
        weights_(weights),
        discount_(discount),
        catalogs_(catalogs) {}

  const ActionCatalog& catalog(int subfeed, int gap) const {
    return catalogs_.get(CatalogKey{subfeed, gap_from_code(gap)});
  }

  struct ActionInfo {
    double local_sat = 0.0;  // dot of weights with expected non-lambda signals
    double local_ads = 0.0;
    double q_feed = 0.0;  // abandon in this sub-feed, feed-quit
    double q_sess = 0.0;  // abandon, session-quit
    double p_surv = 0.0;
    int next_gap = kGapAbsent;
    int ad_count = 0;
  };

  const std::vector<ActionInfo>& actions(int subfeed, int gap) const {
    const auto key = std::make_pair(subfeed, gap);
    auto it = action_cache_.find(key);
    if (it != action_cache_.end()) return it->second;
    const ActionCatalog& cat = catalog(subfeed, gap);
    std::vector<ActionInfo> infos(cat.size());
    for (std::size_t a = 0; a < cat.size(); ++a) {
      const FeedAction& action = cat.action(a);
      const auto model = detail::make_subfeed_model(profile_, action, gap_from_code(gap), config_);
      ActionInfo& info = infos[a];
      SatSignals sat;
      AdsSignals ads;
      model.expected_local_signals(sat, ads);
      info.local_sat = weights_.sat_weights[0] * sat.engagements +
                       weights_.sat_weights[1] * sat.video_play +
                       weights_.sat_weights[2] * sat.pct_video_watch +
                       weights_.sat_weights[3] * sat.feed_depth +
                       weights_.sat_weights[4] * sat.video_skip;
      info.local_ads = weights_.ads_weights[0] * ads.impressions +
                       weights_.ads_weights[1] * ads.clicks +
                       weights_.ads_weights[2] * ads.installs;
      const double q = 1.0 - model.survive_probability();
      info.q_sess = q * config_.session_quit_given_abandon;
      info.q_feed = q - info.q_sess;
      info.p_surv = 1.0 - q;
      info.next_gap = next_gap_code(gap, action);
      info.ad_count = action.ad_count();
    }
    return action_cache_.emplace(key, std::move(infos)).first->second;
  }

  // Run-end distribution from the next decision at (f, s, gap), following
  // uniform logging.
  const RunEndDist& run_end(int f, int s, int gap) const {
    const auto key = std::make_tuple(f, s, gap);
    auto it = run_end_cache_.find(key);
    if (it != run_end_cache_.end()) return it->second;
    RunEndDist dist;
    dist.feed_by_delta.assign(static_cast<std::size_t>(max_fetches_ - f), 0.0);
    const auto& infos = actions(s, gap);
    const double b = 1.0 / static_cast<double>(infos.size());
    for (const auto& info : infos) {
      dist.feed_by_delta[0] += b * info.q_feed;
      dist.session_total += b * info.q_sess;
      if (info.p_surv <= 0.0) continue;
      if (s == 0) {
        const RunEndDist& sub = run_end(f, 1, info.next_gap);
        for (std::size_t d = 0; d < sub.feed_by_delta.size(); ++d)
          dist.feed_by_delta[d] += b * info.p_surv * sub.feed_by_delta[d];
        dist.session_total += b * info.p_surv * sub.session_total;
      } else if (f + 1 < max_fetches_) {
        const RunEndDist& sub = run_end(f + 1, 0, info.next_gap);
        for (std::size_t d = 0; d < sub.feed_by_delta.size(); ++d)
          dist.feed_by_delta[d + 1] += b * info.p_surv * sub.feed_by_delta[d];
        dist.session_total += b * info.p_surv * sub.session_total;
      }
      // else: natural end, no abandonment lambda accrues
    }
    return run_end_cache_.emplace(key, std::move(dist)).first->second;
  }

  // Expected (sat, ads) reward of the record served at (f, s, gap) with
  // rank_i inside its run, when the chosen action is action_id and the
  // future follows uniform logging.
  std::pair<double, double> record_value(int f, int s, int gap, int rank_i,
                                         std::size_t action_id) const {
    const auto& info = actions(s, gap)[action_id];
    double lambda_feed = 0.0;
    double p_sess = info.q_sess;
    // Own-run end distribution given this record's action.
    {
      const double dfa0 = discounted_feed_abandonment(rank_i, rank_i, discount_);
      lambda_feed += info.q_feed * dfa0;
    }
    if (info.p_surv > 0.0) {
      int nf = f, ns = s + 1;
      if (ns > 1) {
        nf = f + 1;
        ns = 0;
      }
      if (nf < max_fetches_) {
        const RunEndDist& dist = run_end(nf, ns, info.next_gap);
        const int base_delta = nf - f;
        for (std::size_t d = 0; d < dist.feed_by_delta.size(); ++d) {
          const double p = dist.feed_by_delta[d];
          if (p == 0.0) continue;
          const int delta = base_delta + static_cast<int>(d);
          lambda_feed += info.p_surv * p *
                         discounted_feed_abandonment(rank_i, rank_i + delta, discount_);
        }
        p_sess += info.p_surv * dist.session_total;
      }
    }
    const double minutes = config_.minutes_per_subfeed * static_cast<double>(2 * f + s);
    const double lambda_sess = p_sess * discounted_session_abandonment(minutes, discount_);
    const double sat = info.local_sat + weights_.sat_weights[5] * lambda_feed +
                       weights_.sat_weights[6] * lambda_sess;
    return {sat, info.local_ads};
  }

  const UserProfile& profile() const { return profile_; }
  int max_fetches() const { return max_fetches_; }

 private:
  UserProfile profile_;
  int max_fetches_;
  const EnvironmentConfig& config_;
  RewardWeights weights_;
  DiscountParams discount_;
  CatalogCache& catalogs_;
  mutable std::map<std::pair<int, int>, std::vector<ActionInfo>> action_cache_;
  mutable std::map<std::tuple<int, int, int>, RunEndDist> run_end_cache_;
};

struct Accumulator {
  double sat = 0.0;
  double ads = 0.0;
  double ad_count = 0.0;
  double records = 0.0;
};

// Exact visitation under uniform logging for one (cohort, session length).
void exact_accumulate(const CohortOracle& oracle, const Policy& policy,
                      const EnvironmentConfig& config, double outer_weight, Accumulator& acc) {
  const int m = oracle.max_fetches();
  // State at level L = 2f+s: (gap_code, run_start) -> probability.
  std::vector<std::map<std::pair<int, int>, double>> levels(
      static_cast<std::size_t>(2 * m + 1));
  levels[0][{kGapAbsent, 0}] = 1.0;

  for (int level = 0; level < 2 * m; ++level) {
    const int f = level / 2;
    const int s = level % 2;
    for (const auto& [state, prob] : levels[static_cast<std::size_t>(level)]) {
      if (prob <= 0.0) continue;
      const auto [gap, run_start] = state;
      const ActionCatalog& catalog = oracle.catalog(s, gap);
      SessionState synth;
      synth.max_fetches = m;
      synth.fetch_index = f;
      synth.subfeed_index = s;
      synth.run_start_fetch = run_start;
      synth.ad_gap = gap_from_code(gap);
      const std::vector<double> context = build_context(oracle.profile(), synth, config);
      const DecisionContext dctx{context, &catalog, f - run_start};
      const auto dist = policy.action_distribution(dctx);

      const int rank_i = f - run_start + 1;
      const auto& infos = oracle.actions(s, gap);
      const double w = outer_weight * prob;
      for (std::size_t a = 0; a < dist.size(); ++a) {
        if (dist[a] == 0.0) continue;
        const auto [sat, ads] = oracle.record_value(f, s, gap, rank_i, a);
        acc.sat += w * dist[a] * sat;
        acc.ads += w * dist[a] * ads;
        acc.ad_count += w * dist[a] * static_cast<double>(infos[a].ad_count);
      }
      acc.records += w;

      // Propagate the session under uniform logging.
      const double b = 1.0 / static_cast<double>(infos.size());
      for (const auto& info : infos) {
        if (info.p_surv > 0.0 && level + 1 < 2 * m)
          levels[static_cast<std::size_t>(level + 1)][{info.next_gap, run_start}] +=
              prob * b * info.p_surv;
        if (info.q_feed > 0.0 && f + 1 < m)
          levels[static_cast<std::size_t>(2 * (f + 1))][{kGapAbsent, f + 1}] +=
              prob * b * info.q_feed;
        // session-quit ends the path
      }
    }
  }
}

int sample_index(const std::vector<double>& weights, Rng& rng) {
  return static_cast<int>(rng.categorical(weights));
}

struct OracleSet {
  // Lazily built per (cohort index, session length).
  std::map<std::pair<int, int>, std::unique_ptr<CohortOracle>> oracles;
  CohortOracle& get(const EnvironmentConfig& config, const RewardWeights& weights,
                    const DiscountParams& discount, CatalogCache& catalogs, int cohort, int m) {
    auto& slot = oracles[{cohort, m}];
    if (!slot)
      slot = std::make_unique<CohortOracle>(config.cohorts[static_cast<std::size_t>(cohort)].profile,
                                            m, config, weights, discount, catalogs);
    return *slot;
  }
};

TruePolicyValue exact_value(const Policy& policy, const EnvironmentConfig& config,
                            const RewardWeights& weights, const DiscountParams& discount,
                            const RewardMixConfig& mix, CatalogCache& catalogs) {
  double cohort_total = 0.0;
  for (const auto& c : config.cohorts) cohort_total += c.weight;
  double pmf_total = 0.0;
  for (const auto& [m, p] : config.session_length_pmf) pmf_total += p;

  OracleSet oracles;
  Accumulator acc;
  for (std::size_t c = 0; c < config.cohorts.size(); ++c) {
    for (const auto& [m, p] : config.session_length_pmf) {
      if (p <= 0.0) continue;
      const double w = (config.cohorts[c].weight / cohort_total) * (p / pmf_total);
      exact_accumulate(
          oracles.get(config, weights, discount, catalogs, static_cast<int>(c), m), policy,
          config, w, acc);
    }
  }
  TruePolicyValue value;
  value.method = OracleMethod::kExactEnumeration;
  value.v_sat = acc.sat / acc.records;
  value.v_ads = acc.ads / acc.records;
  value.v_total = final_reward(value.v_sat, value.v_ads, mix);
  value.expected_ad_count = acc.ad_count / acc.records;
  return value;
}

TruePolicyValue monte_carlo_value(const Policy& policy, const EnvironmentConfig& config,
                                  const RewardWeights& weights, const DiscountParams& discount,
                                  const RewardMixConfig& mix, CatalogCache& catalogs,
                                  const OraclePrecision& precision) {
  std::vector<double> cohort_weights;
  for (const auto& c : config.cohorts) cohort_weights.push_back(c.weight);
  std::vector<double> length_weights;
  for (const auto& [m, p] : config.session_length_pmf) length_weights.push_back(p);

  OracleSet oracles;
  Rng root(precision.seed ^ (config.seed * 0x9e3779b97f4a7c15ULL) ^ 0xa5a5a5a5ULL);

  // Per-session sums for the ratio estimator and its delta-method errors.
  std::vector<double> sess_sat, sess_ads, sess_cnt, sess_n, sess_total;
  TruePolicyValue value;
  value.method = OracleMethod::kMonteCarlo;

  std::size_t sessions = 0;
  auto current_se = [&](std::span<const double> contrib) {
    const double nbar = mean(sess_n);
    const double v = mean(contrib) / nbar;
    std::vector<double> resid(contrib.size());
    for (std::size_t i = 0; i < contrib.size(); ++i) resid[i] = contrib[i] - v * sess_n[i];
    return std::sqrt(variance(resid) / static_cast<double>(contrib.size())) / nbar;
  };

  while (sessions < precision.max_sessions) {
    const std::size_t batch =
        std::max<std::size_t>(precision.min_sessions, sessions);  // double each pass
    for (std::size_t i = 0; i < batch && sessions < precision.max_sessions; ++i, ++sessions) {
      Rng rng = root.derive(sessions + 1);
      const int cohort = sample_index(cohort_weights, rng);
      const int m =
          config.session_length_pmf[static_cast<std::size_t>(sample_index(length_weights, rng))]
              .first;
      CohortOracle& oracle =
          oracles.get(config, weights, discount, catalogs, cohort, m);
      const UserProfile& user = config.cohorts[static_cast<std::size_t>(cohort)].profile;

      SessionState state;
      state.max_fetches = m;
      double x_sat = 0.0, x_ads = 0.0, x_cnt = 0.0, n = 0.0;
      while (!state.session_over) {
        const int f = state.fetch_index;
        const int s = state.subfeed_index;
        const int gap = gap_code(state.ad_gap);
        const int rank_i = state.run_fetch_index() + 1;
        const ActionCatalog& catalog = oracle.catalog(s, gap);
        const std::vector<double> context = build_context(user, state, config);
        const DecisionContext dctx{context, &catalog, state.run_fetch_index()};
        const auto dist = policy.action_distribution(dctx);
        const auto& infos = oracle.actions(s, gap);
        for (std::size_t a = 0; a < dist.size(); ++a) {
          if (dist[a] == 0.0) continue;
          const auto [sat, ads] = oracle.record_value(f, s, gap, rank_i, a);
          x_sat += dist[a] * sat;
          x_ads += dist[a] * ads;
          x_cnt += dist[a] * static_cast<double>(infos[a].ad_count);
        }
        n += 1.0;
        // Roll the session forward under uniform logging.
        const std::size_t logged = rng.uniform_int(catalog.size());
        simulate_fetch(user, state, catalog.action(logged), config, rng);
      }
      sess_sat.push_back(x_sat);
      sess_ads.push_back(x_ads);
      sess_cnt.push_back(x_cnt);
      sess_total.push_back(mix.beta * x_sat + (1.0 - mix.beta) * x_ads);
      sess_n.push_back(n);
    }
    if (sessions >= precision.min_sessions &&
        current_se(sess_total) <= precision.target_std_error)
      break;
  }

  const double nbar = mean(sess_n);
  value.v_sat = mean(sess_sat) / nbar;
  value.v_ads = mean(sess_ads) / nbar;
  value.v_total = final_reward(value.v_sat, value.v_ads, mix);
  value.expected_ad_count = mean(sess_cnt) / nbar;
  value.mc_std_error = current_se(sess_total);
  value.mc_std_error_sat = current_se(sess_sat);
  value.mc_std_error_ads = current_se(sess_ads);
  value.precision_reached = value.mc_std_error <= precision.target_std_error;
  return value;
}

}  // namespace

TruePolicyValue true_policy_value(const Policy& policy, const EnvironmentConfig& config,
                                  const RewardWeights& weights, const DiscountParams& discount,
                                  const RewardMixConfig& mix, const OraclePrecision& precision) {
  config.validate();
  mix.validate();
  CatalogCache catalogs(config.constraints);
  int max_m = 0;
  for (const auto& [m, p] : config.session_length_pmf) max_m = std::max(max_m, m);
  const double state_estimate = static_cast<double>(config.cohorts.size()) *
                                config.session_length_pmf.size() * 2.0 * max_m *
                                (kAdGapCap + 2.0) * max_m;
  if (!precision.force_monte_carlo && !policy.uses_dynamic_context() && state_estimate <= 1e6)
    return exact_value(policy, config, weights, discount, mix, catalogs);
  return monte_carlo_value(policy, config, weights, discount, mix, catalogs, precision);
}

namespace {

class OracleRewardModel final : public RewardModel {
 public:
  OracleRewardModel(EnvironmentConfig config, RewardWeights weights, DiscountParams discount,
                    RewardMixConfig mix)
      : config_(std::move(config)),
        weights_(weights),
        discount_(discount),
        mix_(mix),
        catalogs_(config_.constraints) {
    config_.validate();
    if (config_.session_quit_given_abandon != 1.0)
      throw config_error(
          "oracle reward model: requires session_quit_given_abandon == 1 (single-run sessions)");
  }

  std::string kind() const override { return "oracle"; }

  double predict(std::span<const double> context, const FeedAction& action,
                 const CatalogKey& key) const override {
    if (context.size() < kContextDim)
      throw std::invalid_argument("oracle reward model: context is not adlog-v1 schema");
    const int cohort = find_cohort(context);
    const double minutes = context[kSessionMinutes];
    const int served = static_cast<int>(std::lround(minutes / config_.minutes_per_subfeed));
    const int f = served / 2;
    const int s = served % 2;
    if (s != key.subfeed_index)
      throw invalid_state_error("oracle reward model: context/key sub-feed mismatch");
    const int gap = gap_code(key.prev_last_ad_offset);
    const auto id = catalogs_.get(key).find(action);
    if (!id) throw invalid_state_error("oracle reward model: action not in catalog");

    // Sessions are single runs, so rank_i = f + 1; marginalize over session
    // lengths consistent with the record existing (m >= f + 1).
    double total_w = 0.0, sat = 0.0, ads = 0.0;
    for (const auto& [m, p] : config_.session_length_pmf) {
      if (m < f + 1 || p <= 0.0) continue;
      CohortOracle& oracle = oracles_.get(config_, weights_, discount_, catalogs_, cohort, m);
      const auto [vs, va] = oracle.record_value(f, s, gap, f + 1, *id);
      sat += p * vs;
      ads += p * va;
      total_w += p;
    }
    if (total_w <= 0.0)
      throw invalid_state_error("oracle reward model: no session length admits this record");
    return final_reward(sat / total_w, ads / total_w, mix_);
  }

 private:
  int find_cohort(std::span<const double> context) const {
    int lang = -1;
    for (int k = 0; k < 4; ++k)
      if (context[kLanguageHindi + static_cast<std::size_t>(k)] > 0.5) lang = k;
    const double fatigue = context[kFatigueScore];
    for (std::size_t c = 0; c < config_.cohorts.size(); ++c) {
      const auto& p = config_.cohorts[c].profile;
      if (p.language_index == lang && std::abs(p.fatigue - fatigue) < 1e-9)
        return static_cast<int>(c);
    }
    throw invalid_state_error("oracle reward model: no cohort matches the context");
  }

  EnvironmentConfig config_;
  RewardWeights weights_;
  DiscountParams discount_;
  RewardMixConfig mix_;
  mutable CatalogCache catalogs_;
  mutable OracleSet oracles_;
};

}  // namespace

RewardModelPtr make_oracle_reward_model(const EnvironmentConfig& config,
                                        const RewardWeights& weights,
                                        const DiscountParams& discount,
                                        const RewardMixConfig& mix) {
  return std::make_shared<OracleRewardModel>(config, weights, discount, mix);
}

}  // namespace adload
