#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <string>
#include <vector>

#include "adload/action_space.hpp"
#include "adload/rewards.hpp"

namespace adload {

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kLogSchemaVersion = "adlog-v1";

// One logged bandit interaction: (context, action, reward signals, propensity)
// plus the ids needed for splits and run finalization.
struct LoggedRecord {
  std::vector<double> context;
  std::size_t action_id = 0;  // index into the catalog active at logging time
  CatalogKey catalog_key;
  double propensity = 1.0;  // in (0,1]
  SatSignals sat_signals;
  AdsSignals ads_signals;
  std::optional<int> retention_label;     // delta-1, binary
  std::optional<double> revenue_label;    // nonnegative
  std::string user_id;
  std::string session_id;
  std::int64_t timestamp_ms = 0;
};

// Caches enumerate_actions results keyed by catalog context; all records of
// a log share one ActionConstraints. Returned references stay valid for the
// cache's lifetime.
class CatalogCache {
 public:
  explicit CatalogCache(ActionConstraints constraints) : constraints_(constraints) {}
  const ActionCatalog& get(const CatalogKey& key) const;
  const ActionConstraints& constraints() const { return constraints_; }

 private:
  ActionConstraints constraints_;
  mutable std::list<std::pair<CatalogKey, ActionCatalog>> cache_;
};

struct LogReadOptions {
  bool lenient = false;  // collect malformed lines instead of throwing
};

struct LogParseIssue {
  std::size_t line_number = 0;  // 1-based
  std::string message;
};

struct LogReadResult {
  ActionConstraints constraints;
  std::vector<LoggedRecord> records;
  std::vector<LogParseIssue> issues;  // populated in lenient mode
};

// Line-delimited self-describing text log ("adlog-v1"): one header line with
// schema version and constraints, then one record per line. Actions are
// stored as slot bitmasks.
void write_log(const std::string& path, const std::vector<LoggedRecord>& records,
               const ActionConstraints& constraints);
LogReadResult read_log(const std::string& path, const LogReadOptions& options = {});

struct UserSplit {
  std::vector<LoggedRecord> train;
  std::vector<LoggedRecord> validation;
};

// All records of a user land on one side; deterministic in (user_id, seed).
UserSplit split_by_user(const std::vector<LoggedRecord>& records, double validation_fraction,
                        std::uint64_t seed);
bool user_in_validation(const std::string& user_id, double validation_fraction,
                        std::uint64_t seed);

struct ActionFrequencyCheck {
  CatalogKey catalog_key;
  std::size_t action_id = 0;
  std::int64_t observed_count = 0;
  double expected_count = 0.0;
  double z_score = 0.0;
  bool pass = true;
};

struct PropensityReport {
  std::vector<ActionFrequencyCheck> per_action;
  bool arithmetic_pass = true;
  bool arithmetic_skipped = false;  // families below the minimum size only
  double harmonic_statistic = 0.0;
  bool harmonic_pass = true;
  std::size_t n_records = 0;
  std::vector<std::string> warnings;
};

// Observed vs expected action counts within each catalog-key family;
// two-sided z-tests with Bonferroni correction across tested actions.
// Families with fewer than min_family_size records are skipped with a
// warning.
PropensityReport arithmetic_mean_test(const std::vector<LoggedRecord>& records,
                                      const CatalogCache& catalogs, double significance = 0.05,
                                      std::size_t min_family_size = 30);

enum class HarmonicMode {
  kClosedForm,  // expectation taken under the logged propensities
  kEmpirical,   // reference action resampled from the data (the real check)
};

struct HarmonicResult {
  double statistic = 0.0;
  bool pass = false;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;  // deterministic records (p = 1)
  std::vector<std::string> warnings;
};

// Mean of 1{a=a*}/p + 1{a!=a*}/(1-p); close to 2 iff the logged propensities
// match the sampler that produced the data.
HarmonicResult harmonic_mean_test(const std::vector<LoggedRecord>& records, double tolerance = 0.05,
                                  HarmonicMode mode = HarmonicMode::kEmpirical,
                                  std::uint64_t seed = 0);

// Runs both tests and merges the fragments into one report.
PropensityReport validate_propensities(const std::vector<LoggedRecord>& records,
                                       const CatalogCache& catalogs, double significance = 0.05,
                                       double harmonic_tolerance = 0.05, std::uint64_t seed = 0);

}  // namespace adload
