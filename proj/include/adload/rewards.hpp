#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace adload {

struct degenerate_input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-interaction user (dis-)satisfaction signals.
struct SatSignals {
  double engagements = 0.0;      // likes, shares, downloads
  double video_play = 0.0;       // binary
  double pct_video_watch = 0.0;  // fraction in [0,1]
  double feed_depth = 0.0;       // posts scrolled
  double video_skip = 0.0;       // binary, watch < 2s
  double feed_abandoned = 0.0;    // binary
  double session_abandoned = 0.0;  // binary
  int rank_i = 1;                // fetch index within the consecutive run
  int rank_d = 1;                // fetch index where the run ended
  double session_minutes = 0.0;  // time already spent in session
};

struct AdsSignals {
  double impressions = 0.0;
  double clicks = 0.0;
  double installs = 0.0;
};

struct DiscountParams {
  double alpha = 0.5;                   // attribution strength, in (0,1]
  double session_discount_scale = 1.0;  // minutes normalizer

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw std::invalid_argument("DiscountParams: alpha must be in (0,1]");
    if (!(session_discount_scale > 0.0))
      throw std::invalid_argument("DiscountParams: session_discount_scale must be > 0");
  }
};

inline constexpr std::size_t kSatSignalCount = 7;
inline constexpr std::size_t kAdsSignalCount = 3;

// Linear scalarization weights, ordered as the satisfaction rows
// [engagements, video_play, pct_video_watch, feed_depth, video_skip,
//  discounted_feed_abandonment, discounted_session_abandonment]
// and the ads rows [impressions, clicks, installs].
struct RewardWeights {
  std::array<double, kSatSignalCount> sat_weights{0.5995,  0.6235,  0.3464, 0.3213,
                                                  -0.1432, -0.3742, -1.2345};
  std::array<double, kAdsSignalCount> ads_weights{0.2234, 0.5135, 0.7823};
};

struct RewardMixConfig {
  double beta = 0.8;  // weight on the satisfaction objective, in [0,1]

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0))
      throw std::invalid_argument("RewardMixConfig: beta must be in [0,1]");
  }
};

// (1/ln(1+rank_d)) * alpha^(rank_d - rank_i). Larger for short runs, decayed
// for records further from the run end.
double discounted_feed_abandonment(int rank_i, int rank_d, const DiscountParams& params);

// 1/ln(2 + minutes/scale): finite at zero minutes, decreasing in time spent.
double discounted_session_abandonment(double session_minutes, const DiscountParams& params);

// Signal vector in the weight ordering above, with the abandonment entries
// already discounted.
std::array<double, kSatSignalCount> sat_signal_vector(const SatSignals& signals,
                                                      const DiscountParams& params);

double sat_reward(const SatSignals& signals, const RewardWeights& weights,
                  const DiscountParams& params);

double ads_reward(const AdsSignals& signals, const RewardWeights& weights);

// beta * sat + (1 - beta) * ads.
double final_reward(double sat, double ads, const RewardMixConfig& mix);

struct ScalarizationConfig {
  double learning_rate = 0.05;
  int max_iterations = 10000;
  double tolerance = 1e-8;  // on the gradient norm
  bool drop_constant_columns = false;
};

struct ScalarizationFit {
  std::vector<double> weights;  // unit L2 norm, sign fixed so correlation >= 0
  double achieved_correlation = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::size_t> dropped_columns;  // only when drop_constant_columns
};

// Maximizes Pearson correlation between target and X*w by projected gradient
// ascent on the unit sphere. Columns are standardized internally.
ScalarizationFit fit_scalarization(const std::vector<std::vector<double>>& signal_matrix,
                                   std::span<const double> target,
                                   const ScalarizationConfig& config = {});

}  // namespace adload
