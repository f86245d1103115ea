#include "adload/policy_training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "adload/stats.hpp"

namespace adload {

namespace {

class DmPolicy final : public Policy {
 public:
  explicit DmPolicy(RewardModelPtr model) : model_(std::move(model)) {
    if (!model_) throw config_error("dm_policy: null reward model");
  }
  std::string kind() const override { return "dm"; }
  bool uses_dynamic_context() const override { return true; }

  std::vector<double> action_distribution(const DecisionContext& ctx) const override {
    if (ctx.catalog == nullptr || ctx.catalog->size() == 0)
      throw invalid_state_error("dm_policy: decision context has no catalog");
    const ActionCatalog& catalog = *ctx.catalog;
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < catalog.size(); ++a) {
      const double v = model_->predict(ctx.features, catalog.action(a), catalog.key());
      if (v > best_value) {  // strict: ties keep the lowest action id
        best_value = v;
        best = a;
      }
    }
    std::vector<double> dist(catalog.size(), 0.0);
    dist[best] = 1.0;
    return dist;
  }

 private:
  RewardModelPtr model_;
};

// Per-feature affine scaler; training runs in standardized space and the
// final weights are folded back to raw feature space, so saved policies need
// no scaler at inference time.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for (near-)constant columns

  static FeatureScaler fit(const std::vector<LoggedRecord>& records) {
    FeatureScaler s;
    if (records.empty()) return s;
    const std::size_t d = records.front().context.size();
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    for (const auto& r : records)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += r.context[j];
    for (double& m : s.mean) m /= static_cast<double>(records.size());
    std::vector<double> ss(d, 0.0);
    for (const auto& r : records)
      for (std::size_t j = 0; j < d; ++j) {
        const double dlt = r.context[j] - s.mean[j];
        ss[j] += dlt * dlt;
      }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(ss[j] / static_cast<double>(records.size()));
      if (sd > 1e-9) s.scale[j] = sd;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
  }

  // Rewrites rows of [weights | bias] acting on standardized features into
  // rows acting on raw features.
  void fold_into(Matrix& w) const {
    const std::size_t d = mean.size();
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double* row = w.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        row[d] -= row[j] * mean[j] / scale[j];
        row[j] /= scale[j];
      }
    }
  }
};

// Cached per-record quantities shared by every epoch.
struct RecordView {
  const LoggedRecord* record = nullptr;
  const ActionCatalog* catalog = nullptr;
  double reward = 0.0;
  std::vector<double> features;  // standardized context
  std::vector<double> r_hat;     // model predictions per catalog action (DR)
};

std::vector<RecordView> prepare(const std::vector<LoggedRecord>& records,
                                const CatalogCache& catalogs, const RewardConfig& reward,
                                const RewardModel* model, const FeatureScaler& scaler) {
  std::vector<RecordView> views;
  views.reserve(records.size());
  for (const auto& r : records) {
    RecordView v;
    v.record = &r;
    v.catalog = &catalogs.get(r.catalog_key);
    v.reward = reward(r);
    v.features = scaler.apply(r.context);
    if (model != nullptr) {
      v.r_hat.resize(v.catalog->size());
      for (std::size_t a = 0; a < v.catalog->size(); ++a)
        v.r_hat[a] = model->predict(r.context, v.catalog->action(a), r.catalog_key);
    }
    views.push_back(std::move(v));
  }
  return views;
}

// Linear-softmax trainer; the MLP variant shares the per-record logit
// gradient and backpropagates it through one tanh layer.
class SoftmaxTrainer {
 public:
  SoftmaxTrainer(std::size_t feature_dim, const TrainingConfig& config, Rng& rng,
                 FeatureScaler scaler)
      : scaler_(std::move(scaler)), mlp_(config.policy_kind == "mlp_softmax") {
    if (mlp_) {
      params_.hidden = Matrix(config.mlp_hidden, feature_dim + 1);
      for (double& v : params_.hidden.data()) v = 0.2 * rng.normal();
      params_.output = Matrix(kMaxBitmask + 1, config.mlp_hidden + 1, 0.0);
      params_.temperature = config.temperature;
      params_.epsilon = config.epsilon;
    } else {
      linear_ = SoftmaxPolicyParams::zeros(feature_dim, config.temperature, config.epsilon);
    }
  }

  PolicyPtr make_policy() const {
    if (mlp_) {
      MlpPolicyParams raw = params_;
      scaler_.fold_into(raw.hidden);
      return mlp_softmax_policy(std::move(raw));
    }
    SoftmaxPolicyParams raw = linear_;
    scaler_.fold_into(raw.weights);
    return softmax_policy(std::move(raw));
  }

  // Accumulates the gradient of the objective for one record into the step
  // buffers. g_z holds d(objective)/d(logit_c) for catalog actions c.
  void accumulate(const RecordView& v, TrainObjective objective, const TrainingConfig& config) {
    const auto& record = *v.record;
    const std::size_t n = v.catalog->size();
    std::span<const double> x = v.features;

    std::vector<double> h;  // mlp hidden activations
    std::vector<double> logits(n);
    if (mlp_) {
      h.resize(params_.hidden.rows());
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double* row = params_.hidden.row(i);
        double z = row[x.size()];
        for (std::size_t j = 0; j < x.size(); ++j) z += row[j] * x[j];
        h[i] = std::tanh(z);
      }
      for (std::size_t c = 0; c < n; ++c) {
        const double* row =
            params_.output.row(static_cast<std::size_t>(v.catalog->action(c).to_bitmask()));
        double z = row[h.size()];
        for (std::size_t j = 0; j < h.size(); ++j) z += row[j] * h[j];
        logits[c] = z;
      }
    } else {
      for (std::size_t c = 0; c < n; ++c) {
        const double* row =
            linear_.weights.row(static_cast<std::size_t>(v.catalog->action(c).to_bitmask()));
        double z = row[x.size()];
        for (std::size_t j = 0; j < x.size(); ++j) z += row[j] * x[j];
        logits[c] = z;
      }
    }

    const double t = mlp_ ? params_.temperature : linear_.temperature;
    const double eps = mlp_ ? params_.epsilon : linear_.epsilon;
    double zmax = -1e300;
    for (double z : logits) zmax = std::max(zmax, z / t);
    std::vector<double> sm(n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      sm[c] = std::exp(logits[c] / t - zmax);
      total += sm[c];
    }
    for (double& p : sm) p /= total;
    const double unif = 1.0 / static_cast<double>(n);
    std::vector<double> pi(n);
    for (std::size_t c = 0; c < n; ++c) pi[c] = (1.0 - eps) * sm[c] + eps * unif;

    const std::size_t a = record.action_id;
    std::vector<double> g_z(n, 0.0);

    // Score-function term through the importance weight.
    double coeff;
    if (objective == TrainObjective::kIPW) {
      coeff = v.reward / record.propensity;
      if (config.clip && pi[a] / record.propensity >= *config.clip) coeff = 0.0;
    } else {
      coeff = (v.reward - v.r_hat[a]) / record.propensity;
    }
    // d pi(a)/d z_c = (1-eps) * sm[a] * (delta(a,c) - sm[c]) / t
    for (std::size_t c = 0; c < n; ++c)
      g_z[c] += coeff * (1.0 - eps) * sm[a] * ((c == a ? 1.0 : 0.0) - sm[c]) / t;

    // Exact gradient through the DM term.
    if (objective == TrainObjective::kDR) {
      double sm_rhat = 0.0;
      for (std::size_t c = 0; c < n; ++c) sm_rhat += sm[c] * v.r_hat[c];
      for (std::size_t c = 0; c < n; ++c)
        g_z[c] += (1.0 - eps) * sm[c] * (v.r_hat[c] - sm_rhat) / t;
    }

    // Entropy bonus keeps the policy stochastic during IPW training.
    if (config.entropy_coefficient > 0.0) {
      double avg = 0.0;
      std::vector<double> lp(n);
      for (std::size_t c = 0; c < n; ++c) {
        lp[c] = std::log(pi[c]) + 1.0;
        avg += sm[c] * lp[c];
      }
      for (std::size_t c = 0; c < n; ++c)
        g_z[c] += config.entropy_coefficient * (-(1.0 - eps) * sm[c] * (lp[c] - avg) / t);
    }

    // Backpropagate logit gradients into the parameter step buffers.
    if (mlp_) {
      std::vector<double> g_h(h.size(), 0.0);
      for (std::size_t c = 0; c < n; ++c) {
        if (g_z[c] == 0.0) continue;
        const std::size_t row_index =
            static_cast<std::size_t>(v.catalog->action(c).to_bitmask());
        double* grow = step_output_.row(row_index);
        const double* orow = params_.output.row(row_index);
        for (std::size_t j = 0; j < h.size(); ++j) {
          grow[j] += g_z[c] * h[j];
          g_h[j] += g_z[c] * orow[j];
        }
        grow[h.size()] += g_z[c];
      }
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double g_pre = g_h[i] * (1.0 - h[i] * h[i]);
        if (g_pre == 0.0) continue;
        double* grow = step_hidden_.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) grow[j] += g_pre * x[j];
        grow[x.size()] += g_pre;
      }
    } else {
      for (std::size_t c = 0; c < n; ++c) {
        if (g_z[c] == 0.0) continue;
        double* grow = step_linear_.row(
            static_cast<std::size_t>(v.catalog->action(c).to_bitmask()));
        for (std::size_t j = 0; j < x.size(); ++j) grow[j] += g_z[c] * x[j];
        grow[x.size()] += g_z[c];
      }
    }
  }

  void begin_step() {
    if (mlp_) {
      step_hidden_ = Matrix(params_.hidden.rows(), params_.hidden.cols(), 0.0);
      step_output_ = Matrix(params_.output.rows(), params_.output.cols(), 0.0);
    } else {
      step_linear_ = Matrix(linear_.weights.rows(), linear_.weights.cols(), 0.0);
    }
  }

  // Applies the accumulated (mean) gradient; returns its norm.
  double apply_step(double learning_rate, std::size_t batch_size) {
    const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(batch_size, 1));
    double norm_sq = 0.0;
    auto apply = [&](Matrix& w, const Matrix& g) {
      for (std::size_t i = 0; i < w.data().size(); ++i) {
        const double gv = g.data()[i] * scale;
        norm_sq += gv * gv;
        w.data()[i] += learning_rate * gv;
      }
    };
    if (mlp_) {
      apply(params_.hidden, step_hidden_);
      apply(params_.output, step_output_);
    } else {
      apply(linear_.weights, step_linear_);
    }
    return std::sqrt(norm_sq);
  }

  void snapshot() {
    best_linear_ = linear_;
    best_mlp_ = params_;
  }
  PolicyPtr best_policy() const {
    if (mlp_) {
      MlpPolicyParams raw = best_mlp_;
      scaler_.fold_into(raw.hidden);
      return mlp_softmax_policy(std::move(raw));
    }
    SoftmaxPolicyParams raw = best_linear_;
    scaler_.fold_into(raw.weights);
    return softmax_policy(std::move(raw));
  }

 private:
  FeatureScaler scaler_;
  bool mlp_;
  SoftmaxPolicyParams linear_, best_linear_;
  MlpPolicyParams params_, best_mlp_;
  Matrix step_linear_, step_hidden_, step_output_;
};

}  // namespace

TrainResult train_policy(const std::vector<LoggedRecord>& train_records, TrainObjective objective,
                         const RewardConfig& reward, RewardModelPtr reward_model,
                         const CatalogCache& catalogs, const TrainingConfig& config) {
  if (train_records.empty()) throw estimation_error("train_policy: no records");
  TrainResult result;

  UserSplit split = split_by_user(train_records, config.validation_fraction, config.split_seed);
  if (split.train.empty() || split.validation.empty()) {
    split.train = train_records;
    split.validation = train_records;
    result.warnings.push_back("train_policy: user split degenerate, validating on train data");
  }

  // The validation criterion is always the DR estimate, so a reward model is
  // fit on the train split when none is supplied.
  if (!reward_model)
    reward_model = fit_reward_model(split.train, catalogs, reward, RewardModelConfig{});

  const FeatureScaler scaler = FeatureScaler::fit(split.train);
  const auto train_views = prepare(split.train, catalogs, reward, reward_model.get(), scaler);
  const std::size_t feature_dim = split.train.front().context.size();

  Rng rng(config.seed);
  SoftmaxTrainer trainer(feature_dim, config, rng, scaler);

  EstimatorOptions val_options;
  val_options.bootstrap_resamples = 0;
  auto validation_value = [&](const Policy& p) {
    return estimate_dr(p, *reward_model, split.validation, catalogs, reward, val_options).value;
  };

  PolicyPtr initial = trainer.make_policy();
  double best = validation_value(*initial);
  trainer.snapshot();
  int best_epoch = -1;
  int since_best = 0;

  std::vector<std::size_t> order(train_views.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = config.minibatch == 0 ? train_views.size() : config.minibatch;

  int epoch = 0;
  for (; epoch < config.epochs; ++epoch) {
    if (config.minibatch != 0)
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      trainer.begin_step();
      for (std::size_t i = start; i < end; ++i)
        trainer.accumulate(train_views[order[i]], objective, config);
      const double gnorm = trainer.apply_step(config.learning_rate, end - start);
      if (!std::isfinite(gnorm))
        throw estimation_error("train_policy: non-finite gradient at epoch " +
                               std::to_string(epoch));
    }
    const PolicyPtr current = trainer.make_policy();
    const double value = validation_value(*current);
    if (value > best) {
      best = value;
      best_epoch = epoch;
      since_best = 0;
      trainer.snapshot();
    } else if (++since_best >= config.patience) {
      ++epoch;
      break;
    }
  }
  result.epochs_run = epoch;
  result.best_epoch = best_epoch;
  result.best_validation_value = best;
  if (best_epoch < 0) {
    result.warnings.push_back(
        "train_policy: validation estimate never improved; returning the initial policy");
    result.policy = initial;
  } else {
    result.policy = trainer.best_policy();
  }
  return result;
}

PolicyPtr dm_policy(RewardModelPtr reward_model) {
  return std::make_shared<DmPolicy>(std::move(reward_model));
}

}  // namespace adload
