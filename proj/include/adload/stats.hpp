#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace adload {

// Pairwise (cascade) summation: deterministic and numerically stable
// regardless of how callers shard work.
double pairwise_sum(std::span<const double> values);

inline double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return pairwise_sum(values) / static_cast<double>(values.size());
}

double variance(std::span<const double> values);  // sample variance (n-1)

double pearson(std::span<const double> a, std::span<const double> b);

// Inverse standard normal CDF (Acklam's rational approximation, |err| < 1.2e-9).
double normal_quantile(double p);

// Upper quantile of chi-square via Wilson-Hilferty; adequate for test
// thresholds at the significance levels used here.
double chi_square_quantile(double p, int dof);

struct MeanStdErr {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanStdErr mean_and_std_error(std::span<const double> values);

}  // namespace adload
