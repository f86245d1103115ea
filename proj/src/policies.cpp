#include "adload/policies.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>

#include "json.hpp"

namespace adload {

namespace {

using ordered_json = nlohmann::ordered_json;

const ActionCatalog& require_catalog(const DecisionContext& ctx) {
  if (ctx.catalog == nullptr || ctx.catalog->size() == 0)
    throw invalid_state_error("policy: decision context has no catalog");
  return *ctx.catalog;
}

}  // namespace

double Policy::probability(const DecisionContext& ctx, std::size_t action_id) const {
  const auto dist = action_distribution(ctx);
  if (action_id >= dist.size())
    throw std::invalid_argument("Policy::probability: action_id out of range");
  return dist[action_id];
}

double Policy::probability_of(const DecisionContext& ctx, const FeedAction& action) const {
  const auto id = require_catalog(ctx).find(action);
  if (!id) return 0.0;  // invalid actions carry no mass
  return probability(ctx, *id);
}

std::size_t Policy::sample(const DecisionContext& ctx, Rng& rng) const {
  const auto dist = action_distribution(ctx);
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < dist.size(); ++i) {
    u -= dist[i];
    if (u < 0.0) return i;
  }
  return dist.empty() ? 0 : dist.size() - 1;
}

void StaticPolicyConfig::validate() const {
  if (offset < 1) throw config_error("StaticPolicyConfig: offset must be >= 1");
  if (post_gap < 1) throw config_error("StaticPolicyConfig: post_gap must be >= 1");
}

void FatiguePolicyConfig::validate() const {
  if (!(low_threshold > 0.0 && low_threshold < high_threshold && high_threshold < 1.0))
    throw config_error("FatiguePolicyConfig: need 0 < low < high < 1");
  if (default_ads < 0) throw config_error("FatiguePolicyConfig: default_ads must be >= 0");
}

SoftmaxPolicyParams SoftmaxPolicyParams::zeros(std::size_t feature_dim, double temperature,
                                               double epsilon) {
  SoftmaxPolicyParams p;
  p.weights = Matrix(kMaxBitmask + 1, feature_dim + 1, 0.0);
  p.temperature = temperature;
  p.epsilon = epsilon;
  return p;
}

namespace {

class NoAdsPolicy final : public Policy {
 public:
  std::string kind() const override { return "no_ads"; }
  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    const ActionCatalog& catalog = require_catalog(ctx);
    std::vector<double> dist(catalog.size(), 0.0);
    const auto id = catalog.find_bitmask(0);
    if (!id) throw invalid_state_error("no_ads_policy: catalog lacks the empty action");
    dist[*id] = 1.0;
    return dist;
  }
};

class MaxAdsPolicy final : public Policy {
 public:
  std::string kind() const override { return "max_ads"; }
  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    const ActionCatalog& catalog = require_catalog(ctx);
    std::vector<double> dist(catalog.size(), 0.0);
    // Catalog order is (ad count asc, slots lex asc): the first action of the
    // highest-count block has the most ads at the earliest valid positions.
    const int max_count = catalog.actions().back().ad_count();
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (catalog.action(i).ad_count() == max_count) {
        dist[i] = 1.0;
        return dist;
      }
    }
    dist[0] = 1.0;
    return dist;
  }
};

class UniformPolicy final : public Policy {
 public:
  std::string kind() const override { return "uniform"; }
  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    const ActionCatalog& catalog = require_catalog(ctx);
    return std::vector<double>(catalog.size(), 1.0 / static_cast<double>(catalog.size()));
  }
};

class StaticPolicy final : public Policy {
 public:
  explicit StaticPolicy(StaticPolicyConfig config) : config_(config) { config_.validate(); }
  std::string kind() const override { return "static"; }
  const StaticPolicyConfig& config() const { return config_; }

  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    const ActionCatalog& catalog = require_catalog(ctx);
    // Global 1-based post positions within the run: offset, offset+gap+1, ...
    const int subfeed_in_run = ctx.run_fetch_index * 2 + catalog.key().subfeed_index;
    const int base = subfeed_in_run * kSubfeedLength;
    const int stride = config_.post_gap + 1;
    FeedAction chosen;
    chosen.subfeed_index = catalog.key().subfeed_index;
    bool dropped = false;
    for (int pos = config_.offset; pos <= base + kSubfeedLength; pos += stride) {
      if (pos <= base) continue;
      const int slot = pos - base;
      FeedAction candidate = chosen;
      candidate.slots.push_back(slot);
      if (validate_action(candidate, catalog.constraints(), catalog.key().prev_last_ad_offset))
        chosen = std::move(candidate);
      else
        dropped = true;
    }
    if (dropped && !warned_.exchange(true))
      std::cerr << "warning: static policy (" << config_.offset << "," << config_.post_gap
                << ") dropped ads violating catalog constraints\n";
    const auto id = catalog.find(chosen);
    std::vector<double> dist(catalog.size(), 0.0);
    dist[id ? *id : 0] = 1.0;
    return dist;
  }

 private:
  StaticPolicyConfig config_;
  mutable std::atomic<bool> warned_{false};
};

class FatiguePolicy final : public Policy {
 public:
  explicit FatiguePolicy(FatiguePolicyConfig config) : config_(config) { config_.validate(); }
  std::string kind() const override { return "fatigue"; }
  const FatiguePolicyConfig& config() const { return config_; }

  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    const ActionCatalog& catalog = require_catalog(ctx);
    if (ctx.features.size() <= config_.fatigue_feature_index)
      throw config_error("fatigue_policy: fatigue feature missing from context");
    const double fatigue = ctx.features[config_.fatigue_feature_index];
    int target = config_.default_ads;
    if (fatigue < config_.low_threshold)
      target += 1;
    else if (fatigue > config_.high_threshold)
      target -= 1;
    target = std::clamp(target, 0, catalog.constraints().max_ads);

    // Largest feasible ad count not above the target, earliest positions.
    std::size_t best = 0;
    int best_count = -1;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const int count = catalog.action(i).ad_count();
      if (count <= target && count > best_count) {
        best = i;
        best_count = count;
      }
    }
    std::vector<double> dist(catalog.size(), 0.0);
    dist[best] = 1.0;
    return dist;
  }

 private:
  FatiguePolicyConfig config_;
};

std::vector<double> mixed_softmax(const std::vector<double>& logits, double temperature,
                                  double epsilon) {
  const std::size_t n = logits.size();
  if (epsilon < 0.0 || (n > 0 && epsilon >= 1.0 / static_cast<double>(n)))
    throw config_error("softmax policy: epsilon must satisfy 0 <= epsilon < 1/|catalog|");
  const double t = temperature > 0.0 ? temperature : 1e-12;
  double zmax = -1e300;
  for (double z : logits) zmax = std::max(zmax, z / t);
  std::vector<double> dist(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = std::exp(logits[i] / t - zmax);
    total += dist[i];
  }
  const double unif = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    dist[i] = (1.0 - epsilon) * (dist[i] / total) + epsilon * unif;
  return dist;
}

class SoftmaxPolicy final : public Policy {
 public:
  explicit SoftmaxPolicy(SoftmaxPolicyParams params) : params_(std::move(params)) {
    if (params_.weights.rows() != static_cast<std::size_t>(kMaxBitmask + 1))
      throw config_error("softmax_policy: weights must have 32 rows (one per bitmask)");
    if (!(params_.temperature > 0.0))
      throw config_error("softmax_policy: temperature must be > 0");
    // Bias-only parameterizations are context-free and keep exact-oracle
    // eligibility.
    for (std::size_t i = 0; i < params_.weights.rows() && !dynamic_; ++i)
      for (std::size_t j = 0; j + 1 < params_.weights.cols(); ++j)
        if (params_.weights(i, j) != 0.0) {
          dynamic_ = true;
          break;
        }
  }
  std::string kind() const override { return "linear_softmax"; }
  bool uses_dynamic_context() const override { return dynamic_; }
  const SoftmaxPolicyParams& params() const { return params_; }

  std::vector<double> logits(const DecisionContext& ctx) const {
    const ActionCatalog& catalog = require_catalog(ctx);
    if (ctx.features.size() + 1 != params_.weights.cols())
      throw config_error("softmax_policy: feature dimension mismatch");
    std::vector<double> out(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const double* row = params_.weights.row(
          static_cast<std::size_t>(catalog.action(i).to_bitmask()));
      double z = row[ctx.features.size()];  // bias
      for (std::size_t j = 0; j < ctx.features.size(); ++j) z += row[j] * ctx.features[j];
      out[i] = z;
    }
    return out;
  }

  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    return mixed_softmax(logits(ctx), params_.temperature, params_.epsilon);
  }

 private:
  SoftmaxPolicyParams params_;
  bool dynamic_ = false;
};

class MlpSoftmaxPolicy final : public Policy {
 public:
  explicit MlpSoftmaxPolicy(MlpPolicyParams params) : params_(std::move(params)) {
    if (params_.output.rows() != static_cast<std::size_t>(kMaxBitmask + 1))
      throw config_error("mlp_softmax_policy: output must have 32 rows");
    if (params_.output.cols() != params_.hidden.rows() + 1)
      throw config_error("mlp_softmax_policy: layer shape mismatch");
  }
  std::string kind() const override { return "mlp_softmax"; }
  bool uses_dynamic_context() const override { return true; }
  const MlpPolicyParams& params() const { return params_; }

  std::vector<double> hidden_activations(std::span<const double> features) const {
    if (features.size() + 1 != params_.hidden.cols())
      throw config_error("mlp_softmax_policy: feature dimension mismatch");
    std::vector<double> h(params_.hidden.rows());
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double* row = params_.hidden.row(i);
      double z = row[features.size()];
      for (std::size_t j = 0; j < features.size(); ++j) z += row[j] * features[j];
      h[i] = std::tanh(z);
    }
    return h;
  }

  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    const ActionCatalog& catalog = require_catalog(ctx);
    const auto h = hidden_activations(ctx.features);
    std::vector<double> logits(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const double* row = params_.output.row(
          static_cast<std::size_t>(catalog.action(i).to_bitmask()));
      double z = row[h.size()];
      for (std::size_t j = 0; j < h.size(); ++j) z += row[j] * h[j];
      logits[i] = z;
    }
    return mixed_softmax(logits, params_.temperature, params_.epsilon);
  }

 private:
  MlpPolicyParams params_;
};

ordered_json matrix_to_json(const Matrix& m) {
  return ordered_json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const ordered_json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data() = j.at("data").get<std::vector<double>>();
  if (m.data().size() != m.rows() * m.cols())
    throw config_error("policy file: matrix payload size mismatch");
  return m;
}

}  // namespace

PolicyPtr no_ads_policy() { return std::make_shared<NoAdsPolicy>(); }
PolicyPtr max_ads_policy() { return std::make_shared<MaxAdsPolicy>(); }
PolicyPtr uniform_policy() { return std::make_shared<UniformPolicy>(); }
PolicyPtr static_policy(const StaticPolicyConfig& config) {
  return std::make_shared<StaticPolicy>(config);
}
PolicyPtr fatigue_policy(const FatiguePolicyConfig& config) {
  return std::make_shared<FatiguePolicy>(config);
}
PolicyPtr softmax_policy(SoftmaxPolicyParams params) {
  return std::make_shared<SoftmaxPolicy>(std::move(params));
}
PolicyPtr mlp_softmax_policy(MlpPolicyParams params) {
  return std::make_shared<MlpSoftmaxPolicy>(std::move(params));
}

void save_policy(const std::string& path, const Policy& policy,
                 const ActionConstraints& constraints) {
  ordered_json j;
  j["format"] = "adload-policy-v1";
  j["kind"] = policy.kind();
  char hash_hex[19];
  std::snprintf(hash_hex, sizeof hash_hex, "0x%016llx",
                static_cast<unsigned long long>(constraints.hash()));
  j["constraints_hash"] = hash_hex;
  if (const auto* p = dynamic_cast<const StaticPolicy*>(&policy)) {
    j["offset"] = p->config().offset;
    j["post_gap"] = p->config().post_gap;
  } else if (const auto* p = dynamic_cast<const FatiguePolicy*>(&policy)) {
    j["default_ads"] = p->config().default_ads;
    j["low_threshold"] = p->config().low_threshold;
    j["high_threshold"] = p->config().high_threshold;
    j["fatigue_feature_index"] = p->config().fatigue_feature_index;
  } else if (const auto* p = dynamic_cast<const SoftmaxPolicy*>(&policy)) {
    j["temperature"] = p->params().temperature;
    j["epsilon"] = p->params().epsilon;
    j["weights"] = matrix_to_json(p->params().weights);
  } else if (const auto* p = dynamic_cast<const MlpSoftmaxPolicy*>(&policy)) {
    j["temperature"] = p->params().temperature;
    j["epsilon"] = p->params().epsilon;
    j["hidden"] = matrix_to_json(p->params().hidden);
    j["output"] = matrix_to_json(p->params().output);
  } else if (policy.kind() != "no_ads" && policy.kind() != "max_ads" &&
             policy.kind() != "uniform") {
    throw config_error("save_policy: kind '" + policy.kind() + "' is not serializable");
  }
  std::ofstream out(path);
  if (!out) throw config_error("save_policy: cannot open " + path);
  out << j.dump(2) << '\n';
}

LoadedPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("load_policy: cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw config_error("load_policy: parse error in " + path + ": " + e.what());
  }
  if (j.at("format").get<std::string>() != "adload-policy-v1")
    throw config_error("load_policy: unsupported format");
  LoadedPolicy result;
  const std::string hash_hex = j.at("constraints_hash").get<std::string>();
  result.constraints_hash = std::stoull(hash_hex, nullptr, 16);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "no_ads") {
    result.policy = no_ads_policy();
  } else if (kind == "max_ads") {
    result.policy = max_ads_policy();
  } else if (kind == "uniform") {
    result.policy = uniform_policy();
  } else if (kind == "static") {
    result.policy = static_policy({j.at("offset").get<int>(), j.at("post_gap").get<int>()});
  } else if (kind == "fatigue") {
    FatiguePolicyConfig c;
    c.default_ads = j.at("default_ads").get<int>();
    c.low_threshold = j.at("low_threshold").get<double>();
    c.high_threshold = j.at("high_threshold").get<double>();
    c.fatigue_feature_index = j.at("fatigue_feature_index").get<std::size_t>();
    result.policy = fatigue_policy(c);
  } else if (kind == "linear_softmax") {
    SoftmaxPolicyParams p;
    p.temperature = j.at("temperature").get<double>();
    p.epsilon = j.at("epsilon").get<double>();
    p.weights = matrix_from_json(j.at("weights"));
    result.policy = softmax_policy(std::move(p));
  } else if (kind == "mlp_softmax") {
    MlpPolicyParams p;
    p.temperature = j.at("temperature").get<double>();
    p.epsilon = j.at("epsilon").get<double>();
    p.hidden = matrix_from_json(j.at("hidden"));
    p.output = matrix_from_json(j.at("output"));
    result.policy = mlp_softmax_policy(std::move(p));
  } else {
    throw config_error("load_policy: unknown kind '" + kind + "'");
  }
  return result;
}

}  // namespace adload
