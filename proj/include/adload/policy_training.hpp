#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adload/estimators.hpp"
#include "adload/policies.hpp"

namespace adload {

enum class TrainObjective { kIPW, kDR };

struct TrainingConfig {
  std::string policy_kind = "linear_softmax";  // or "mlp_softmax"
  double learning_rate = 0.5;
  int epochs = 400;
  std::size_t minibatch = 0;  // 0 = full batch
  double entropy_coefficient = 0.01;
  double epsilon = 0.01;  // propensity floor mixed into the softmax
  double temperature = 1.0;
  std::size_t mlp_hidden = 16;
  double validation_fraction = 0.2;
  std::uint64_t split_seed = 23;
  int patience = 10;  // epochs without validation improvement
  std::uint64_t seed = 5;
  std::optional<double> clip;  // training importance-weight cap
};

struct TrainResult {
  PolicyPtr policy;
  double best_validation_value = 0.0;
  int best_epoch = -1;  // -1 means the initial policy was returned
  int epochs_run = 0;
  std::vector<std::string> warnings;
};

// Gradient ascent on the chosen off-policy estimate of policy value
// (score-function gradient through the importance weight, exact gradient
// through the DM term). Rewards are recomputed from raw signals under the
// RewardConfig's mix, so beta is a training-time knob. Early stopping keeps
// the parameters with the best validation-split DR estimate.
TrainResult train_policy(const std::vector<LoggedRecord>& train_records, TrainObjective objective,
                         const RewardConfig& reward, RewardModelPtr reward_model,
                         const CatalogCache& catalogs, const TrainingConfig& config = {});

// Deterministic argmax-of-reward-estimate policy; ties break to the lowest
// action id.
PolicyPtr dm_policy(RewardModelPtr reward_model);

}  // namespace adload
