#include "adload/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include "adload/rng.hpp"
#include "adload/stats.hpp"
#include "json.hpp"

namespace adload {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json constraints_to_json(const ActionConstraints& c) {
  return ordered_json{{"max_ads", c.max_ads},
                      {"min_position_difference", c.min_position_difference},
                      {"forbid_slot1_on_first_subfeed", c.forbid_slot1_on_first_subfeed}};
}

ActionConstraints constraints_from_json(const ordered_json& j) {
  ActionConstraints c;
  c.max_ads = j.at("max_ads").get<int>();
  c.min_position_difference = j.at("min_position_difference").get<int>();
  c.forbid_slot1_on_first_subfeed = j.at("forbid_slot1_on_first_subfeed").get<bool>();
  c.validate();
  return c;
}

ordered_json record_to_json(const LoggedRecord& r, const CatalogCache& catalogs) {
  const ActionCatalog& catalog = catalogs.get(r.catalog_key);
  ordered_json j;
  j["context"] = r.context;
  j["action"] = catalog.action(r.action_id).to_bitmask();
  j["subfeed_index"] = r.catalog_key.subfeed_index;
  if (r.catalog_key.prev_last_ad_offset)
    j["prev_last_ad_offset"] = *r.catalog_key.prev_last_ad_offset;
  else
    j["prev_last_ad_offset"] = nullptr;
  j["propensity"] = r.propensity;
  j["sat_signals"] = ordered_json{{"engagements", r.sat_signals.engagements},
                                  {"video_play", r.sat_signals.video_play},
                                  {"pct_video_watch", r.sat_signals.pct_video_watch},
                                  {"feed_depth", r.sat_signals.feed_depth},
                                  {"video_skip", r.sat_signals.video_skip},
                                  {"feed_abandoned", r.sat_signals.feed_abandoned},
                                  {"session_abandoned", r.sat_signals.session_abandoned},
                                  {"rank_i", r.sat_signals.rank_i},
                                  {"rank_d", r.sat_signals.rank_d},
                                  {"session_minutes", r.sat_signals.session_minutes}};
  j["ads_signals"] = ordered_json{{"impressions", r.ads_signals.impressions},
                                  {"clicks", r.ads_signals.clicks},
                                  {"installs", r.ads_signals.installs}};
  j["retention_label"] = r.retention_label ? ordered_json(*r.retention_label) : ordered_json(nullptr);
  j["revenue_label"] = r.revenue_label ? ordered_json(*r.revenue_label) : ordered_json(nullptr);
  j["user_id"] = r.user_id;
  j["session_id"] = r.session_id;
  j["timestamp"] = r.timestamp_ms;
  return j;
}

LoggedRecord record_from_json(const ordered_json& j, const CatalogCache& catalogs) {
  LoggedRecord r;
  r.context = j.at("context").get<std::vector<double>>();
  r.catalog_key.subfeed_index = j.at("subfeed_index").get<int>();
  if (!j.at("prev_last_ad_offset").is_null())
    r.catalog_key.prev_last_ad_offset = j.at("prev_last_ad_offset").get<int>();
  const int mask = j.at("action").get<int>();
  const ActionCatalog& catalog = catalogs.get(r.catalog_key);
  const auto id = catalog.find_bitmask(mask);
  if (!id)
    throw data_error("action bitmask " + std::to_string(mask) + " invalid for catalog " +
                     r.catalog_key.to_string());
  r.action_id = *id;
  r.propensity = j.at("propensity").get<double>();
  if (!(r.propensity > 0.0 && r.propensity <= 1.0))
    throw data_error("propensity must be in (0,1]");
  const auto& sat = j.at("sat_signals");
  r.sat_signals.engagements = sat.at("engagements").get<double>();
  r.sat_signals.video_play = sat.at("video_play").get<double>();
  r.sat_signals.pct_video_watch = sat.at("pct_video_watch").get<double>();
  r.sat_signals.feed_depth = sat.at("feed_depth").get<double>();
  r.sat_signals.video_skip = sat.at("video_skip").get<double>();
  r.sat_signals.feed_abandoned = sat.at("feed_abandoned").get<double>();
  r.sat_signals.session_abandoned = sat.at("session_abandoned").get<double>();
  r.sat_signals.rank_i = sat.at("rank_i").get<int>();
  r.sat_signals.rank_d = sat.at("rank_d").get<int>();
  r.sat_signals.session_minutes = sat.at("session_minutes").get<double>();
  const auto& ads = j.at("ads_signals");
  r.ads_signals.impressions = ads.at("impressions").get<double>();
  r.ads_signals.clicks = ads.at("clicks").get<double>();
  r.ads_signals.installs = ads.at("installs").get<double>();
  if (!j.at("retention_label").is_null())
    r.retention_label = j.at("retention_label").get<int>();
  if (!j.at("revenue_label").is_null())
    r.revenue_label = j.at("revenue_label").get<double>();
  r.user_id = j.at("user_id").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.timestamp_ms = j.at("timestamp").get<std::int64_t>();
  return r;
}

}  // namespace

const ActionCatalog& CatalogCache::get(const CatalogKey& key) const {
  for (const auto& [k, catalog] : cache_)
    if (k == key) return catalog;
  cache_.emplace_back(key, enumerate_actions(constraints_, key.subfeed_index,
                                             key.prev_last_ad_offset));
  return cache_.back().second;
}

void write_log(const std::string& path, const std::vector<LoggedRecord>& records,
               const ActionConstraints& constraints) {
  std::ofstream out(path);
  if (!out) throw data_error("write_log: cannot open " + path);
  CatalogCache catalogs(constraints);
  ordered_json header{{"schema_version", kLogSchemaVersion},
                      {"constraints", constraints_to_json(constraints)}};
  out << header.dump() << '\n';
  for (const auto& r : records) out << record_to_json(r, catalogs).dump() << '\n';
  if (!out) throw data_error("write_log: write failed for " + path);
}

LogReadResult read_log(const std::string& path, const LogReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw data_error("read_log: cannot open " + path);
  LogReadResult result;
  std::string line;
  std::size_t line_number = 0;

  if (!std::getline(in, line)) return result;  // empty file -> empty dataset
  ++line_number;
  try {
    const auto header = ordered_json::parse(line);
    const std::string version = header.at("schema_version").get<std::string>();
    if (version != kLogSchemaVersion)
      throw data_error("unsupported schema version '" + version + "'");
    result.constraints = constraints_from_json(header.at("constraints"));
  } catch (const data_error&) {
    throw;
  } catch (const std::exception& e) {
    throw data_error("read_log: bad header at line 1: " + std::string(e.what()));
  }

  CatalogCache catalogs(result.constraints);
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      result.records.push_back(record_from_json(ordered_json::parse(line), catalogs));
    } catch (const std::exception& e) {
      if (!options.lenient)
        throw data_error("read_log: malformed record at line " + std::to_string(line_number) +
                         ": " + e.what());
      result.issues.push_back({line_number, e.what()});
    }
  }
  return result;
}

bool user_in_validation(const std::string& user_id, double validation_fraction,
                        std::uint64_t seed) {
  Rng r(fnv1a64(user_id) ^ (seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
  return r.uniform() < validation_fraction;
}

UserSplit split_by_user(const std::vector<LoggedRecord>& records, double validation_fraction,
                        std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("split_by_user: fraction must be in (0,1)");
  UserSplit split;
  for (const auto& r : records) {
    if (user_in_validation(r.user_id, validation_fraction, seed))
      split.validation.push_back(r);
    else
      split.train.push_back(r);
  }
  return split;
}

PropensityReport arithmetic_mean_test(const std::vector<LoggedRecord>& records,
                                      const CatalogCache& catalogs, double significance,
                                      std::size_t min_family_size) {
  PropensityReport report;
  report.n_records = records.size();

  std::map<std::pair<int, int>, std::vector<const LoggedRecord*>> families;
  for (const auto& r : records) {
    const int off = r.catalog_key.prev_last_ad_offset ? *r.catalog_key.prev_last_ad_offset : -1;
    families[{r.catalog_key.subfeed_index, off}].push_back(&r);
  }

  // Count every per-action test up front for the Bonferroni correction.
  std::size_t total_tests = 0;
  for (const auto& [fk, recs] : families) {
    if (recs.size() < min_family_size) continue;
    const CatalogKey key{fk.first, fk.second < 0 ? std::nullopt : std::optional<int>(fk.second)};
    total_tests += catalogs.get(key).size();
  }
  if (total_tests == 0) {
    report.arithmetic_skipped = true;
    report.warnings.push_back("arithmetic test skipped: no catalog family has at least " +
                              std::to_string(min_family_size) + " records");
    return report;
  }
  const double z_crit = normal_quantile(1.0 - significance / (2.0 * static_cast<double>(total_tests)));

  for (const auto& [fk, recs] : families) {
    const CatalogKey key{fk.first, fk.second < 0 ? std::nullopt : std::optional<int>(fk.second)};
    if (recs.size() < min_family_size) {
      report.warnings.push_back("family " + key.to_string() + " skipped: only " +
                                std::to_string(recs.size()) + " records");
      continue;
    }
    const ActionCatalog& catalog = catalogs.get(key);
    std::vector<std::int64_t> observed(catalog.size(), 0);
    // Each record's logged propensity stands in for the probability of any
    // single action in its family; exact for uniform logging, where the
    // propensity is shared across the catalog.
    double expected = 0.0, var = 0.0;
    for (const LoggedRecord* r : recs) {
      ++observed[r->action_id];
      expected += r->propensity;
      var += r->propensity * (1.0 - r->propensity);
    }
    const double sd = std::sqrt(var);
    for (std::size_t a = 0; a < catalog.size(); ++a) {
      ActionFrequencyCheck check;
      check.catalog_key = key;
      check.action_id = a;
      check.observed_count = observed[a];
      check.expected_count = expected;
      check.z_score = sd > 0.0 ? (static_cast<double>(observed[a]) - expected) / sd : 0.0;
      check.pass = std::abs(check.z_score) <= z_crit;
      if (!check.pass) report.arithmetic_pass = false;
      report.per_action.push_back(check);
    }
  }
  return report;
}

HarmonicResult harmonic_mean_test(const std::vector<LoggedRecord>& records, double tolerance,
                                  HarmonicMode mode, std::uint64_t seed) {
  HarmonicResult result;
  std::vector<const LoggedRecord*> usable;
  usable.reserve(records.size());
  for (const auto& r : records) {
    if (r.propensity >= 1.0) {
      ++result.n_excluded;
      continue;
    }
    usable.push_back(&r);
  }
  if (result.n_excluded > 0)
    result.warnings.push_back(std::to_string(result.n_excluded) +
                              " deterministic records (p=1) excluded from harmonic test");
  if (usable.empty()) {
    result.warnings.push_back("harmonic test skipped: no usable records");
    return result;
  }
  result.n_used = usable.size();

  std::vector<double> terms;
  terms.reserve(usable.size());
  if (mode == HarmonicMode::kClosedForm) {
    // Expectation under the logged propensities themselves:
    // p*(1/p) + (1-p)*(1/(1-p)) = 2 identically; checks the data is usable
    // and the formula wiring, not the sampler.
    for (const LoggedRecord* r : usable) {
      const double p = r->propensity;
      terms.push_back(p * (1.0 / p) + (1.0 - p) * (1.0 / (1.0 - p)));
    }
  } else {
    // Resample the reference action from the data itself (the empirical
    // logging distribution), per catalog family.
    std::map<std::pair<int, int>, std::vector<int>> family_actions;
    for (const LoggedRecord* r : usable) {
      const int off = r->catalog_key.prev_last_ad_offset ? *r->catalog_key.prev_last_ad_offset : -1;
      family_actions[{r->catalog_key.subfeed_index, off}].push_back(
          static_cast<int>(r->action_id));
    }
    Rng rng(seed ^ 0x5bd1e995u);
    for (const LoggedRecord* r : usable) {
      const int off = r->catalog_key.prev_last_ad_offset ? *r->catalog_key.prev_last_ad_offset : -1;
      const auto& pool = family_actions[{r->catalog_key.subfeed_index, off}];
      const int drawn = pool[rng.uniform_int(pool.size())];
      const double p = r->propensity;
      terms.push_back(drawn == static_cast<int>(r->action_id) ? 1.0 / p : 1.0 / (1.0 - p));
    }
  }
  result.statistic = mean(terms);
  result.pass = std::abs(result.statistic - 2.0) <= tolerance;
  return result;
}

PropensityReport validate_propensities(const std::vector<LoggedRecord>& records,
                                       const CatalogCache& catalogs, double significance,
                                       double harmonic_tolerance, std::uint64_t seed) {
  PropensityReport report = arithmetic_mean_test(records, catalogs, significance);
  const HarmonicResult harmonic =
      harmonic_mean_test(records, harmonic_tolerance, HarmonicMode::kEmpirical, seed);
  report.harmonic_statistic = harmonic.statistic;
  report.harmonic_pass = harmonic.pass;
  for (const auto& w : harmonic.warnings) report.warnings.push_back(w);
  return report;
}

}  // namespace adload
