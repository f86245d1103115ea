#include "adload/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adload/linalg.hpp"
#include "adload/stats.hpp"

namespace adload {

namespace {

// Feature map shared by the concrete reward models:
// [context..., one-hot over the 32 action bitmasks..., 1].
std::size_t model_feature_dim(std::size_t context_dim) { return context_dim + kMaxBitmask + 2; }

void fill_features(std::span<const double> context, const FeedAction& action,
                   std::vector<double>& out) {
  const std::size_t d = context.size();
  out.assign(model_feature_dim(d), 0.0);
  std::copy(context.begin(), context.end(), out.begin());
  out[d + static_cast<std::size_t>(action.to_bitmask())] = 1.0;
  out.back() = 1.0;
}

class RidgeRewardModel final : public RewardModel {
 public:
  RidgeRewardModel(std::vector<double> coef, std::size_t context_dim, double lambda, double mse)
      : coef_(std::move(coef)), context_dim_(context_dim), lambda_(lambda), validation_mse_(mse) {}

  std::string kind() const override { return "ridge"; }
  double validation_mse() const override { return validation_mse_; }
  double lambda() const { return lambda_; }
  const std::vector<double>& coefficients() const { return coef_; }

  double predict(std::span<const double> context, const FeedAction& action,
                 const CatalogKey&) const override {
    if (context.size() != context_dim_)
      throw std::invalid_argument("ridge model: context dimension mismatch");
    const std::size_t d = context.size();
    double y = coef_.back();
    for (std::size_t j = 0; j < d; ++j) y += coef_[j] * context[j];
    y += coef_[d + static_cast<std::size_t>(action.to_bitmask())];
    return y;
  }

 private:
  std::vector<double> coef_;
  std::size_t context_dim_;
  double lambda_;
  double validation_mse_;
};

class MlpRewardModel final : public RewardModel {
 public:
  MlpRewardModel(Matrix hidden, std::vector<double> output, std::size_t context_dim, double mse)
      : hidden_(std::move(hidden)),
        output_(std::move(output)),
        context_dim_(context_dim),
        validation_mse_(mse) {}

  std::string kind() const override { return "mlp"; }
  double validation_mse() const override { return validation_mse_; }
  const Matrix& hidden() const { return hidden_; }
  const std::vector<double>& output() const { return output_; }

  double predict(std::span<const double> context, const FeedAction& action,
                 const CatalogKey&) const override {
    if (context.size() != context_dim_)
      throw std::invalid_argument("mlp model: context dimension mismatch");
    std::vector<double> phi;
    fill_features(context, action, phi);
    double y = output_.back();
    for (std::size_t i = 0; i < hidden_.rows(); ++i) {
      const double* row = hidden_.row(i);
      double z = 0.0;
      for (std::size_t j = 0; j < phi.size(); ++j) z += row[j] * phi[j];
      y += output_[i] * std::tanh(z);
    }
    return y;
  }

 private:
  Matrix hidden_;                // hidden_dim x feature_dim
  std::vector<double> output_;   // hidden_dim + 1 (bias last)
  std::size_t context_dim_;
  double validation_mse_;
};

class BiasedRewardModel final : public RewardModel {
 public:
  BiasedRewardModel(RewardModelPtr base, double offset) : base_(std::move(base)), offset_(offset) {}
  std::string kind() const override { return base_->kind() + "+offset"; }
  double predict(std::span<const double> context, const FeedAction& action,
                 const CatalogKey& key) const override {
    return base_->predict(context, action, key) + offset_;
  }

 private:
  RewardModelPtr base_;
  double offset_;
};

double mse_on(const std::vector<LoggedRecord>& records, const CatalogCache& catalogs,
              const RewardConfig& reward, const RewardModel& model) {
  if (records.empty()) return 0.0;
  std::vector<double> sq;
  sq.reserve(records.size());
  for (const auto& r : records) {
    const FeedAction& a = catalogs.get(r.catalog_key).action(r.action_id);
    const double err = model.predict(r.context, a, r.catalog_key) - reward(r);
    sq.push_back(err * err);
  }
  return mean(sq);
}

RewardModelPtr fit_ridge(const std::vector<LoggedRecord>& train,
                         const std::vector<LoggedRecord>& validation,
                         const CatalogCache& catalogs, const RewardConfig& reward,
                         const RewardModelConfig& config) {
  const std::size_t context_dim = train.front().context.size();
  const std::size_t d = model_feature_dim(context_dim);
  Matrix gram(d, d, 0.0);
  std::vector<double> xty(d, 0.0);
  std::vector<double> phi;
  for (const auto& r : train) {
    const FeedAction& a = catalogs.get(r.catalog_key).action(r.action_id);
    fill_features(r.context, a, phi);
    const double y = reward(r);
    for (std::size_t i = 0; i < d; ++i) {
      if (phi[i] == 0.0) continue;
      xty[i] += phi[i] * y;
      for (std::size_t j = i; j < d; ++j) gram(i, j) += phi[i] * phi[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);

  double best_mse = std::numeric_limits<double>::infinity();
  std::vector<double> best_coef;
  double best_lambda = 0.0;
  const auto& eval_set = validation.empty() ? train : validation;
  for (double lambda : config.ridge_lambda_grid) {
    std::vector<double> coef;
    try {
      coef = cholesky_solve(gram, xty, std::max(lambda, 1e-10));
    } catch (const std::runtime_error&) {
      continue;  // degenerate design at this lambda, try a larger one
    }
    RidgeRewardModel candidate(std::move(coef), context_dim, lambda, 0.0);
    const double mse = mse_on(eval_set, catalogs, reward, candidate);
    if (mse < best_mse) {
      best_mse = mse;
      best_coef = candidate.coefficients();
      best_lambda = lambda;
    }
  }
  if (best_coef.empty()) throw estimation_error("fit_reward_model: ridge fit failed for every lambda");
  return std::make_shared<RidgeRewardModel>(std::move(best_coef), context_dim, best_lambda,
                                            best_mse);
}

RewardModelPtr fit_mlp(const std::vector<LoggedRecord>& train,
                       const std::vector<LoggedRecord>& validation, const CatalogCache& catalogs,
                       const RewardConfig& reward, const RewardModelConfig& config) {
  const std::size_t context_dim = train.front().context.size();
  const std::size_t d = model_feature_dim(context_dim);
  const std::size_t h = config.hidden_dim;
  Rng rng(config.init_seed);
  Matrix w1(h, d);
  for (double& v : w1.data()) v = 0.1 * rng.normal();
  std::vector<double> w2(h + 1, 0.0);
  for (std::size_t i = 0; i < h; ++i) w2[i] = 0.1 * rng.normal();

  // Adam on MSE.
  Matrix m1(h, d), v1(h, d);
  std::vector<double> m2(h + 1, 0.0), v2(h + 1, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> phi, z(h), act(h);
  long step = 0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t idx : order) {
      const auto& r = train[idx];
      const FeedAction& a = catalogs.get(r.catalog_key).action(r.action_id);
      fill_features(r.context, a, phi);
      double y_hat = w2[h];
      for (std::size_t i = 0; i < h; ++i) {
        double s = 0.0;
        const double* row = w1.row(i);
        for (std::size_t j = 0; j < d; ++j) s += row[j] * phi[j];
        z[i] = s;
        act[i] = std::tanh(s);
        y_hat += w2[i] * act[i];
      }
      const double err = y_hat - reward(r);
      ++step;
      const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
      auto adam = [&](double& w, double& m, double& v, double g) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        w -= config.learning_rate * (m / corr1) / (std::sqrt(v / corr2) + eps);
      };
      for (std::size_t i = 0; i < h; ++i) {
        const double g_out = err * act[i];
        adam(w2[i], m2[i], v2[i], g_out);
        const double g_pre = err * w2[i] * (1.0 - act[i] * act[i]);
        double* wrow = w1.row(i);
        double* mrow = m1.row(i);
        double* vrow = v1.row(i);
        for (std::size_t j = 0; j < d; ++j) {
          if (phi[j] == 0.0) continue;
          adam(wrow[j], mrow[j], vrow[j], g_pre * phi[j]);
        }
      }
      adam(w2[h], m2[h], v2[h], err);
    }
  }
  MlpRewardModel fitted(std::move(w1), std::move(w2), context_dim, 0.0);
  const auto& eval_set = validation.empty() ? train : validation;
  const double mse = mse_on(eval_set, catalogs, reward, fitted);
  return std::make_shared<MlpRewardModel>(fitted.hidden(), fitted.output(), context_dim, mse);
}

}  // namespace

RewardModelPtr fit_reward_model(const std::vector<LoggedRecord>& train_records,
                                const CatalogCache& catalogs, const RewardConfig& reward,
                                const RewardModelConfig& config) {
  if (train_records.empty()) throw estimation_error("fit_reward_model: no records");
  std::vector<LoggedRecord> train = train_records;
  std::vector<LoggedRecord> validation;
  if (config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
    UserSplit split = split_by_user(train_records, config.validation_fraction, config.split_seed);
    if (!split.train.empty() && !split.validation.empty()) {
      train = std::move(split.train);
      validation = std::move(split.validation);
    }
  }
  if (config.kind == "ridge") return fit_ridge(train, validation, catalogs, reward, config);
  if (config.kind == "mlp") return fit_mlp(train, validation, catalogs, reward, config);
  throw config_error("fit_reward_model: unknown kind '" + config.kind + "'");
}

RewardModelPtr biased_reward_model(RewardModelPtr base, double offset) {
  return std::make_shared<BiasedRewardModel>(std::move(base), offset);
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kDM: return "DM";
    case EstimatorKind::kIPW: return "IPW";
    case EstimatorKind::kClippedIPW: return "ClippedIPW";
    case EstimatorKind::kSNIPS: return "SNIPS";
    case EstimatorKind::kDR: return "DR";
  }
  return "?";
}

DecisionContext decision_context(const LoggedRecord& record, const CatalogCache& catalogs) {
  DecisionContext ctx;
  ctx.features = record.context;
  ctx.catalog = &catalogs.get(record.catalog_key);
  ctx.run_fetch_index = record.sat_signals.rank_i - 1;
  return ctx;
}

namespace {

double bootstrap_std_error(std::span<const double> terms, const EstimatorOptions& options) {
  if (options.bootstrap_resamples <= 0 || terms.size() < 2) return 0.0;
  Rng rng(options.bootstrap_seed);
  const std::size_t n = terms.size();
  std::vector<double> means(static_cast<std::size_t>(options.bootstrap_resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += terms[rng.uniform_int(n)];
    m = s / static_cast<double>(n);
  }
  return std::sqrt(variance(means));
}

double bootstrap_ratio_std_error(std::span<const double> num, std::span<const double> den,
                                 const EstimatorOptions& options) {
  if (options.bootstrap_resamples <= 0 || num.size() < 2) return 0.0;
  Rng rng(options.bootstrap_seed);
  const std::size_t n = num.size();
  std::vector<double> ratios;
  ratios.reserve(static_cast<std::size_t>(options.bootstrap_resamples));
  for (int b = 0; b < options.bootstrap_resamples; ++b) {
    double sn = 0.0, sd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.uniform_int(n);
      sn += num[k];
      sd += den[k];
    }
    if (sd != 0.0) ratios.push_back(sn / sd);
  }
  if (ratios.size() < 2) return 0.0;
  return std::sqrt(variance(ratios));
}

}  // namespace

ValueEstimate estimate_dm(const Policy& policy, const RewardModel& model,
                          const std::vector<LoggedRecord>& records, const CatalogCache& catalogs,
                          const EstimatorOptions& options) {
  std::vector<double> terms;
  terms.reserve(records.size());
  for (const auto& r : records) {
    const DecisionContext ctx = decision_context(r, catalogs);
    const auto dist = policy.action_distribution(ctx);
    double v = 0.0;
    for (std::size_t a = 0; a < dist.size(); ++a) {
      if (dist[a] == 0.0) continue;
      v += dist[a] * model.predict(r.context, ctx.catalog->action(a), r.catalog_key);
    }
    terms.push_back(v);
  }
  ValueEstimate est;
  est.estimator_kind = EstimatorKind::kDM;
  est.n_records = records.size();
  est.value = mean(terms);
  est.std_error = bootstrap_std_error(terms, options);
  return est;
}

ValueEstimate estimate_ipw(const Policy& policy, const std::vector<LoggedRecord>& records,
                           const CatalogCache& catalogs, const RewardConfig& reward,
                           const EstimatorOptions& options) {
  std::vector<double> terms;
  terms.reserve(records.size());
  for (const auto& r : records) {
    if (!(r.propensity > 0.0)) throw data_error("estimate_ipw: record with propensity <= 0");
    const DecisionContext ctx = decision_context(r, catalogs);
    double w = policy.probability(ctx, r.action_id) / r.propensity;
    if (options.clip) w = std::min(w, *options.clip);
    terms.push_back(reward(r) * w);
  }
  ValueEstimate est;
  est.estimator_kind = options.clip ? EstimatorKind::kClippedIPW : EstimatorKind::kIPW;
  est.clip_level = options.clip;
  est.n_records = records.size();
  est.value = mean(terms);
  est.std_error = bootstrap_std_error(terms, options);
  return est;
}

ValueEstimate estimate_snips(const Policy& policy, const std::vector<LoggedRecord>& records,
                             const CatalogCache& catalogs, const RewardConfig& reward,
                             const EstimatorOptions& options) {
  std::vector<double> num, den;
  num.reserve(records.size());
  den.reserve(records.size());
  for (const auto& r : records) {
    if (!(r.propensity > 0.0)) throw data_error("estimate_snips: record with propensity <= 0");
    const DecisionContext ctx = decision_context(r, catalogs);
    const double w = policy.probability(ctx, r.action_id) / r.propensity;
    num.push_back(reward(r) * w);
    den.push_back(w);
  }
  const double total_w = pairwise_sum(den);
  if (total_w == 0.0)
    throw estimation_error("estimate_snips: zero total importance weight (no support overlap)");
  ValueEstimate est;
  est.estimator_kind = EstimatorKind::kSNIPS;
  est.n_records = records.size();
  est.value = pairwise_sum(num) / total_w;
  est.std_error = bootstrap_ratio_std_error(num, den, options);
  return est;
}

ValueEstimate estimate_dr(const Policy& policy, const RewardModel& model,
                          const std::vector<LoggedRecord>& records, const CatalogCache& catalogs,
                          const RewardConfig& reward, const EstimatorOptions& options) {
  std::vector<double> terms;
  terms.reserve(records.size());
  for (const auto& r : records) {
    if (!(r.propensity > 0.0)) throw data_error("estimate_dr: record with propensity <= 0");
    const DecisionContext ctx = decision_context(r, catalogs);
    const auto dist = policy.action_distribution(ctx);
    double dm_term = 0.0;
    for (std::size_t a = 0; a < dist.size(); ++a) {
      if (dist[a] == 0.0) continue;
      dm_term += dist[a] * model.predict(r.context, ctx.catalog->action(a), r.catalog_key);
    }
    const double r_hat_logged =
        model.predict(r.context, ctx.catalog->action(r.action_id), r.catalog_key);
    const double w = dist[r.action_id] / r.propensity;
    terms.push_back((reward(r) - r_hat_logged) * w + dm_term);
  }
  ValueEstimate est;
  est.estimator_kind = EstimatorKind::kDR;
  est.n_records = records.size();
  est.value = mean(terms);
  est.std_error = bootstrap_std_error(terms, options);
  return est;
}

}  // namespace adload
