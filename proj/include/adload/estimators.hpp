#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adload/dataset.hpp"
#include "adload/policies.hpp"
#include "adload/rewards.hpp"

namespace adload {

struct estimation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything needed to turn a record's raw signals into the scalar reward.
struct RewardConfig {
  RewardWeights weights;
  DiscountParams discount;
  RewardMixConfig mix;

  double sat(const LoggedRecord& r) const { return sat_reward(r.sat_signals, weights, discount); }
  double ads(const LoggedRecord& r) const { return ads_reward(r.ads_signals, weights); }
  double operator()(const LoggedRecord& r) const { return final_reward(sat(r), ads(r), mix); }
};

// Supervised reward regressor r_hat(a|x).
class RewardModel {
 public:
  virtual ~RewardModel() = default;
  virtual std::string kind() const = 0;
  virtual double predict(std::span<const double> context, const FeedAction& action,
                         const CatalogKey& key) const = 0;
  virtual double validation_mse() const { return 0.0; }
};

using RewardModelPtr = std::shared_ptr<const RewardModel>;

struct RewardModelConfig {
  std::string kind = "ridge";  // "ridge" or "mlp"
  std::vector<double> ridge_lambda_grid{1e-8, 1e-4, 1e-2, 1.0, 10.0};
  double validation_fraction = 0.2;
  std::uint64_t split_seed = 17;
  // mlp only
  std::size_t hidden_dim = 32;
  int epochs = 40;
  double learning_rate = 1e-3;
  std::uint64_t init_seed = 7;
};

// Fits r_hat on the train records (an internal user split provides the
// validation MSE and, for ridge, the lambda selection).
RewardModelPtr fit_reward_model(const std::vector<LoggedRecord>& train_records,
                                const CatalogCache& catalogs, const RewardConfig& reward,
                                const RewardModelConfig& config = {});

// Wraps a model with an additive offset; used to study robustness to reward
// model bias.
RewardModelPtr biased_reward_model(RewardModelPtr base, double offset);

enum class EstimatorKind { kDM, kIPW, kClippedIPW, kSNIPS, kDR };
std::string to_string(EstimatorKind kind);

struct ValueEstimate {
  double value = 0.0;
  double std_error = 0.0;
  EstimatorKind estimator_kind = EstimatorKind::kIPW;
  std::size_t n_records = 0;
  std::optional<double> clip_level;
};

struct EstimatorOptions {
  std::optional<double> clip;       // IPW weight cap
  int bootstrap_resamples = 200;    // 0 disables the std_error computation
  std::uint64_t bootstrap_seed = 42;
};

DecisionContext decision_context(const LoggedRecord& record, const CatalogCache& catalogs);

ValueEstimate estimate_dm(const Policy& policy, const RewardModel& model,
                          const std::vector<LoggedRecord>& records, const CatalogCache& catalogs,
                          const EstimatorOptions& options = {});

ValueEstimate estimate_ipw(const Policy& policy, const std::vector<LoggedRecord>& records,
                           const CatalogCache& catalogs, const RewardConfig& reward,
                           const EstimatorOptions& options = {});

ValueEstimate estimate_snips(const Policy& policy, const std::vector<LoggedRecord>& records,
                             const CatalogCache& catalogs, const RewardConfig& reward,
                             const EstimatorOptions& options = {});

ValueEstimate estimate_dr(const Policy& policy, const RewardModel& model,
                          const std::vector<LoggedRecord>& records, const CatalogCache& catalogs,
                          const RewardConfig& reward, const EstimatorOptions& options = {});

}  // namespace adload
