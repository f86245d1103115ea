#include "adload/config.hpp"

#include <fstream>

#include "json.hpp"

namespace adload {

namespace {

using ordered_json = nlohmann::ordered_json;

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ordered_json constraints_json(const ActionConstraints& c) {
  return {{"max_ads", c.max_ads},
          {"min_position_difference", c.min_position_difference},
          {"forbid_slot1_on_first_subfeed", c.forbid_slot1_on_first_subfeed}};
}

void constraints_from(const ordered_json& j, ActionConstraints& c) {
  maybe(j, "max_ads", c.max_ads);
  maybe(j, "min_position_difference", c.min_position_difference);
  maybe(j, "forbid_slot1_on_first_subfeed", c.forbid_slot1_on_first_subfeed);
  c.validate();
}

ordered_json environment_json(const EnvironmentConfig& e) {
  ordered_json cohorts = ordered_json::array();
  for (const auto& c : e.cohorts) {
    cohorts.push_back({{"language_index", c.profile.language_index},
                       {"fatigue", c.profile.fatigue},
                       {"base_engagement", c.profile.base_engagement},
                       {"ad_sensitivity", c.profile.ad_sensitivity},
                       {"platform_age_days", c.profile.platform_age_days},
                       {"logins_yesterday", c.profile.logins_yesterday},
                       {"avg_inactivity_days_week", c.profile.avg_inactivity_days_week},
                       {"genre_affinity", c.profile.genre_affinity},
                       {"clicks_7d", c.profile.clicks_7d},
                       {"impressions_7d", c.profile.impressions_7d},
                       {"weight", c.weight}});
  }
  ordered_json pmf = ordered_json::array();
  for (const auto& [m, p] : e.session_length_pmf) pmf.push_back({{"fetches", m}, {"p", p}});
  return {{"languages", e.languages},
          {"cohorts", cohorts},
          {"position_view_decay", e.position_view_decay},
          {"view_fatigue_drop", e.view_fatigue_drop},
          {"base_abandon_hazard", e.base_abandon_hazard},
          {"hazard_fatigue_rise", e.hazard_fatigue_rise},
          {"post_ad_abandon_multiplier", e.post_ad_abandon_multiplier},
          {"click_rate", e.click_rate},
          {"install_rate", e.install_rate},
          {"engage_rate", e.engage_rate},
          {"engage_ad_drop", e.engage_ad_drop},
          {"video_play_rate", e.video_play_rate},
          {"video_skip_rate", e.video_skip_rate},
          {"video_skip_ad_rise", e.video_skip_ad_rise},
          {"watch_base", e.watch_base},
          {"watch_ad_drop", e.watch_ad_drop},
          {"session_length_pmf", pmf},
          {"session_quit_given_abandon", e.session_quit_given_abandon},
          {"minutes_per_subfeed", e.minutes_per_subfeed},
          {"retention_bias", e.retention_bias},
          {"retention_slope", e.retention_slope},
          {"revenue_per_impression", e.revenue_per_impression},
          {"revenue_per_click", e.revenue_per_click},
          {"revenue_per_install", e.revenue_per_install},
          {"revenue_noise", e.revenue_noise},
          {"seed", e.seed}};
}

void environment_from(const ordered_json& j, EnvironmentConfig& e) {
  maybe(j, "languages", e.languages);
  if (j.contains("cohorts")) {
    e.cohorts.clear();
    for (const auto& cj : j.at("cohorts")) {
      CohortSpec c;
      maybe(cj, "language_index", c.profile.language_index);
      maybe(cj, "fatigue", c.profile.fatigue);
      maybe(cj, "base_engagement", c.profile.base_engagement);
      maybe(cj, "ad_sensitivity", c.profile.ad_sensitivity);
      maybe(cj, "platform_age_days", c.profile.platform_age_days);
      maybe(cj, "logins_yesterday", c.profile.logins_yesterday);
      maybe(cj, "avg_inactivity_days_week", c.profile.avg_inactivity_days_week);
      maybe(cj, "genre_affinity", c.profile.genre_affinity);
      maybe(cj, "clicks_7d", c.profile.clicks_7d);
      maybe(cj, "impressions_7d", c.profile.impressions_7d);
      maybe(cj, "weight", c.weight);
      e.cohorts.push_back(c);
    }
  }
  maybe(j, "position_view_decay", e.position_view_decay);
  maybe(j, "view_fatigue_drop", e.view_fatigue_drop);
  maybe(j, "base_abandon_hazard", e.base_abandon_hazard);
  maybe(j, "hazard_fatigue_rise", e.hazard_fatigue_rise);
  maybe(j, "post_ad_abandon_multiplier", e.post_ad_abandon_multiplier);
  maybe(j, "click_rate", e.click_rate);
  maybe(j, "install_rate", e.install_rate);
  maybe(j, "engage_rate", e.engage_rate);
  maybe(j, "engage_ad_drop", e.engage_ad_drop);
  maybe(j, "video_play_rate", e.video_play_rate);
  maybe(j, "video_skip_rate", e.video_skip_rate);
  maybe(j, "video_skip_ad_rise", e.video_skip_ad_rise);
  maybe(j, "watch_base", e.watch_base);
  maybe(j, "watch_ad_drop", e.watch_ad_drop);
  if (j.contains("session_length_pmf")) {
    e.session_length_pmf.clear();
    for (const auto& pj : j.at("session_length_pmf"))
      e.session_length_pmf.emplace_back(pj.at("fetches").get<int>(), pj.at("p").get<double>());
  }
  maybe(j, "session_quit_given_abandon", e.session_quit_given_abandon);
  maybe(j, "minutes_per_subfeed", e.minutes_per_subfeed);
  maybe(j, "retention_bias", e.retention_bias);
  maybe(j, "retention_slope", e.retention_slope);
  maybe(j, "revenue_per_impression", e.revenue_per_impression);
  maybe(j, "revenue_per_click", e.revenue_per_click);
  maybe(j, "revenue_per_install", e.revenue_per_install);
  maybe(j, "revenue_noise", e.revenue_noise);
  maybe(j, "seed", e.seed);
}

}  // namespace

HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("load_config: cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw config_error("load_config: parse error in " + path + ": " + e.what());
  }
  HarnessConfig cfg;
  if (j.contains("constraints")) constraints_from(j.at("constraints"), cfg.constraints);
  if (j.contains("reward")) {
    const auto& rj = j.at("reward");
    maybe(rj, "sat_weights", cfg.reward.weights.sat_weights);
    maybe(rj, "ads_weights", cfg.reward.weights.ads_weights);
    maybe(rj, "beta", cfg.reward.mix.beta);
    if (rj.contains("discount")) {
      maybe(rj.at("discount"), "alpha", cfg.reward.discount.alpha);
      maybe(rj.at("discount"), "session_discount_scale",
            cfg.reward.discount.session_discount_scale);
    }
    cfg.reward.mix.validate();
    cfg.reward.discount.validate();
  }
  if (j.contains("environment")) environment_from(j.at("environment"), cfg.environment);
  cfg.environment.constraints = cfg.constraints;
  if (j.contains("training")) {
    const auto& tj = j.at("training");
    maybe(tj, "policy_kind", cfg.training.policy_kind);
    maybe(tj, "learning_rate", cfg.training.learning_rate);
    maybe(tj, "epochs", cfg.training.epochs);
    maybe(tj, "minibatch", cfg.training.minibatch);
    maybe(tj, "entropy_coefficient", cfg.training.entropy_coefficient);
    maybe(tj, "epsilon", cfg.training.epsilon);
    maybe(tj, "temperature", cfg.training.temperature);
    maybe(tj, "mlp_hidden", cfg.training.mlp_hidden);
    maybe(tj, "validation_fraction", cfg.training.validation_fraction);
    maybe(tj, "patience", cfg.training.patience);
    maybe(tj, "seed", cfg.training.seed);
    if (tj.contains("clip")) cfg.training.clip = tj.at("clip").get<double>();
  }
  if (j.contains("reward_model")) {
    const auto& mj = j.at("reward_model");
    maybe(mj, "kind", cfg.reward_model.kind);
    maybe(mj, "ridge_lambda_grid", cfg.reward_model.ridge_lambda_grid);
    maybe(mj, "validation_fraction", cfg.reward_model.validation_fraction);
    maybe(mj, "hidden_dim", cfg.reward_model.hidden_dim);
    maybe(mj, "epochs", cfg.reward_model.epochs);
    maybe(mj, "learning_rate", cfg.reward_model.learning_rate);
  }
  if (j.contains("fatigue_policy")) {
    const auto& fj = j.at("fatigue_policy");
    maybe(fj, "default_ads", cfg.fatigue.default_ads);
    maybe(fj, "low_threshold", cfg.fatigue.low_threshold);
    maybe(fj, "high_threshold", cfg.fatigue.high_threshold);
    cfg.fatigue.validate();
  }
  if (j.contains("static_policy")) {
    const auto& sj = j.at("static_policy");
    maybe(sj, "offset", cfg.static_baseline.offset);
    maybe(sj, "post_gap", cfg.static_baseline.post_gap);
    cfg.static_baseline.validate();
  }
  cfg.environment.validate();
  return cfg;
}

void save_config(const std::string& path, const HarnessConfig& cfg) {
  ordered_json j;
  j["constraints"] = constraints_json(cfg.constraints);
  j["reward"] = {{"sat_weights", cfg.reward.weights.sat_weights},
                 {"ads_weights", cfg.reward.weights.ads_weights},
                 {"beta", cfg.reward.mix.beta},
                 {"discount",
                  {{"alpha", cfg.reward.discount.alpha},
                   {"session_discount_scale", cfg.reward.discount.session_discount_scale}}}};
  j["environment"] = environment_json(cfg.environment);
  j["training"] = {{"policy_kind", cfg.training.policy_kind},
                   {"learning_rate", cfg.training.learning_rate},
                   {"epochs", cfg.training.epochs},
                   {"minibatch", cfg.training.minibatch},
                   {"entropy_coefficient", cfg.training.entropy_coefficient},
                   {"epsilon", cfg.training.epsilon},
                   {"temperature", cfg.training.temperature},
                   {"mlp_hidden", cfg.training.mlp_hidden},
                   {"validation_fraction", cfg.training.validation_fraction},
                   {"patience", cfg.training.patience},
                   {"seed", cfg.training.seed}};
  j["reward_model"] = {{"kind", cfg.reward_model.kind},
                       {"ridge_lambda_grid", cfg.reward_model.ridge_lambda_grid},
                       {"validation_fraction", cfg.reward_model.validation_fraction},
                       {"hidden_dim", cfg.reward_model.hidden_dim},
                       {"epochs", cfg.reward_model.epochs},
                       {"learning_rate", cfg.reward_model.learning_rate}};
  j["fatigue_policy"] = {{"default_ads", cfg.fatigue.default_ads},
                         {"low_threshold", cfg.fatigue.low_threshold},
                         {"high_threshold", cfg.fatigue.high_threshold}};
  j["static_policy"] = {{"offset", cfg.static_baseline.offset},
                        {"post_gap", cfg.static_baseline.post_gap}};
  std::ofstream out(path);
  if (!out) throw config_error("save_config: cannot open " + path);
  out << j.dump(2) << '\n';
}

}  // namespace adload
