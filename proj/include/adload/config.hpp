#pragma once

#include <string>

#include "adload/action_space.hpp"
#include "adload/estimators.hpp"
#include "adload/policy_training.hpp"
#include "adload/simulator.hpp"

namespace adload {

// The single declarative configuration file the harness subcommands share
// (JSON; every field optional, defaults applied). Weight vectors are ordered
// exactly as the signal rows documented in rewards.hpp.
struct HarnessConfig {
  ActionConstraints constraints;
  RewardConfig reward;
  EnvironmentConfig environment = default_environment();
  TrainingConfig training;
  RewardModelConfig reward_model;
  FatiguePolicyConfig fatigue;
  StaticPolicyConfig static_baseline;
};

HarnessConfig load_config(const std::string& path);
void save_config(const std::string& path, const HarnessConfig& config);

}  // namespace adload
