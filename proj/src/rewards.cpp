#include "adload/rewards.hpp"

#include <cmath>

#include "adload/stats.hpp"

namespace adload {

double discounted_feed_abandonment(int rank_i, int rank_d, const DiscountParams& params) {
  params.validate();
  if (rank_i < 1 || rank_i > rank_d)
    throw std::invalid_argument("discounted_feed_abandonment: requires 1 <= rank_i <= rank_d");
  return (1.0 / std::log(1.0 + static_cast<double>(rank_d))) *
         std::pow(params.alpha, static_cast<double>(rank_d - rank_i));
}

double discounted_session_abandonment(double session_minutes, const DiscountParams& params) {
  params.validate();
  if (session_minutes < 0.0)
    throw std::invalid_argument("discounted_session_abandonment: negative minutes");
  return 1.0 / std::log(2.0 + session_minutes / params.session_discount_scale);
}

std::array<double, kSatSignalCount> sat_signal_vector(const SatSignals& signals,
                                                      const DiscountParams& params) {
  const double lambda_feed =
      signals.feed_abandoned != 0.0
          ? signals.feed_abandoned *
                discounted_feed_abandonment(signals.rank_i, signals.rank_d, params)
          : 0.0;
  const double lambda_session =
      signals.session_abandoned != 0.0
          ? signals.session_abandoned *
                discounted_session_abandonment(signals.session_minutes, params)
          : 0.0;
  return {signals.engagements, signals.video_play, signals.pct_video_watch,
          signals.feed_depth,  signals.video_skip, lambda_feed,
          lambda_session};
}

double sat_reward(const SatSignals& signals, const RewardWeights& weights,
                  const DiscountParams& params) {
  const auto x = sat_signal_vector(signals, params);
  double r = 0.0;
  for (std::size_t i = 0; i < kSatSignalCount; ++i) r += weights.sat_weights[i] * x[i];
  return r;
}

double ads_reward(const AdsSignals& signals, const RewardWeights& weights) {
  return weights.ads_weights[0] * signals.impressions + weights.ads_weights[1] * signals.clicks +
         weights.ads_weights[2] * signals.installs;
}

double final_reward(double sat, double ads, const RewardMixConfig& mix) {
  mix.validate();
  return mix.beta * sat + (1.0 - mix.beta) * ads;
}

namespace {

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

ScalarizationFit fit_scalarization(const std::vector<std::vector<double>>& signal_matrix,
                                   std::span<const double> target,
                                   const ScalarizationConfig& config) {
  const std::size_t n = signal_matrix.size();
  if (n == 0 || target.size() != n)
    throw std::invalid_argument("fit_scalarization: empty matrix or target size mismatch");
  const std::size_t d_in = signal_matrix.front().size();
  if (n < d_in + 1)
    throw degenerate_input_error("fit_scalarization: need at least d+1 rows");

  // Center the target; Pearson is translation invariant.
  const double ty_mean = mean(target);
  std::vector<double> y(n);
  double y_norm_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = target[i] - ty_mean;
    y_norm_sq += y[i] * y[i];
  }
  const double y_scale = 1.0 + std::abs(ty_mean);
  if (std::sqrt(y_norm_sq / static_cast<double>(n)) <= 1e-12 * y_scale)
    throw degenerate_input_error("fit_scalarization: target has zero variance");

  // Standardize columns; constant columns are an error unless dropped.
  ScalarizationFit fit;
  std::vector<std::size_t> kept;
  std::vector<double> col_mean(d_in, 0.0), col_scale(d_in, 1.0);
  for (std::size_t j = 0; j < d_in; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += signal_matrix[i][j];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlt = signal_matrix[i][j] - m;
      ss += dlt * dlt;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd <= 1e-12 * (1.0 + std::abs(m))) {
      if (!config.drop_constant_columns)
        throw degenerate_input_error("fit_scalarization: column " + std::to_string(j) +
                                     " is constant");
      fit.dropped_columns.push_back(j);
      continue;
    }
    col_mean[j] = m;
    col_scale[j] = sd;
    kept.push_back(j);
  }
  const std::size_t d = kept.size();
  if (d == 0) throw degenerate_input_error("fit_scalarization: all columns constant");

  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x[i][j] = (signal_matrix[i][kept[j]] - col_mean[kept[j]]) / col_scale[kept[j]];

  const double y_norm = std::sqrt(y_norm_sq);
  std::vector<double> xty(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xty[j] += x[i][j] * y[i];

  // rho(w) = (y' X w) / (||Xw|| ||y||); scale invariant, so project to the
  // unit sphere every step.
  std::vector<double> w(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> u(n), xtu(d), grad(d);
  auto evaluate = [&](const std::vector<double>& wv, double& rho_out, double& u_norm_out) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += x[i][j] * wv[j];
      u[i] = s;
    }
    double a = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a += y[i] * u[i];
      b2 += u[i] * u[i];
    }
    u_norm_out = std::sqrt(b2);
    rho_out = (u_norm_out > 0.0) ? a / (u_norm_out * y_norm) : 0.0;
  };

  double rho = 0.0, u_norm = 0.0;
  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    evaluate(w, rho, u_norm);
    if (u_norm == 0.0) {
      // Xw vanished; restart along the correlation direction.
      w = xty;
      const double nn = l2_norm(w);
      if (nn == 0.0) break;
      for (double& v : w) v /= nn;
      continue;
    }
    for (std::size_t j = 0; j < d; ++j) xtu[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) xtu[j] += x[i][j] * u[i];
    const double a = rho * u_norm * y_norm;
    double gnorm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      grad[j] = xty[j] / (u_norm * y_norm) - a * xtu[j] / (u_norm * u_norm * u_norm * y_norm);
      gnorm += grad[j] * grad[j];
    }
    gnorm = std::sqrt(gnorm);
    if (gnorm < config.tolerance) {
      fit.converged = true;
      break;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] += config.learning_rate * grad[j];
    const double wn = l2_norm(w);
    for (std::size_t j = 0; j < d; ++j) w[j] /= wn;
  }
  evaluate(w, rho, u_norm);
  if (rho < 0.0) {
    for (double& v : w) v = -v;
    rho = -rho;
  }

  fit.weights = std::move(w);
  fit.achieved_correlation = rho;
  fit.iterations = iter;
  return fit;
}

}  // namespace adload
