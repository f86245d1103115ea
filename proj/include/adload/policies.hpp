#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adload/action_space.hpp"
#include "adload/context_schema.hpp"
#include "adload/linalg.hpp"
#include "adload/rng.hpp"

namespace adload {

// Everything a policy may condition on for one sub-feed decision.
struct DecisionContext {
  std::span<const double> features;
  const ActionCatalog* catalog = nullptr;
  int run_fetch_index = 0;  // 0-based fetch index within the current consecutive run
};

// Contextual distribution over the valid actions of the decision's catalog.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string kind() const = 0;

  // Probabilities aligned with ctx.catalog action ids; sums to 1.
  virtual std::vector<double> action_distribution(const DecisionContext& ctx) const = 0;

  // True when the distribution depends on stochastic session counters; such
  // policies need Monte Carlo rather than exact enumeration for true values.
  virtual bool uses_dynamic_context() const { return false; }

  double probability(const DecisionContext& ctx, std::size_t action_id) const;
  double probability_of(const DecisionContext& ctx, const FeedAction& action) const;
  std::size_t sample(const DecisionContext& ctx, Rng& rng) const;
};

using PolicyPtr = std::shared_ptr<const Policy>;

struct StaticPolicyConfig {
  int offset = 3;    // overall 1-based position of the first ad
  int post_gap = 5;  // non-ad posts between consecutive ads

  void validate() const;
};

struct FatiguePolicyConfig {
  int default_ads = 1;          // ads per sub-feed before adjustment
  double low_threshold = 0.3;   // below: one more ad
  double high_threshold = 0.7;  // above: one fewer ad
  std::size_t fatigue_feature_index = kFatigueScore;

  void validate() const;
};

struct SoftmaxPolicyParams {
  // One weight row per action bitmask (32 rows), each of length
  // feature_dim + 1 (trailing bias), so the same parameters apply to every
  // catalog.
  Matrix weights;  // 32 x (feature_dim + 1)
  double temperature = 1.0;
  double epsilon = 0.0;  // uniform mixing floor, < 1/|catalog|

  static SoftmaxPolicyParams zeros(std::size_t feature_dim, double temperature = 1.0,
                                   double epsilon = 0.0);
};

PolicyPtr no_ads_policy();
// Mass 1 on the catalog action with the most ads at the earliest valid
// positions.
PolicyPtr max_ads_policy();
PolicyPtr uniform_policy();
PolicyPtr static_policy(const StaticPolicyConfig& config);
PolicyPtr fatigue_policy(const FatiguePolicyConfig& config);
PolicyPtr softmax_policy(SoftmaxPolicyParams params);

// An MLP head over the context producing one logit per action bitmask;
// same epsilon/temperature semantics as the linear softmax.
struct MlpPolicyParams {
  Matrix hidden;  // hidden_dim x (feature_dim + 1)
  Matrix output;  // 32 x (hidden_dim + 1)
  double temperature = 1.0;
  double epsilon = 0.0;
};
PolicyPtr mlp_softmax_policy(MlpPolicyParams params);

// Versioned model file (kind tag + parameter arrays + constraints hash).
void save_policy(const std::string& path, const Policy& policy,
                 const ActionConstraints& constraints);
struct LoadedPolicy {
  PolicyPtr policy;
  std::uint64_t constraints_hash = 0;
};
LoadedPolicy load_policy(const std::string& path);

}  // namespace adload
