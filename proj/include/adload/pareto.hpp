#pragma once

#include <optional>
#include <string>
#include <vector>

namespace adload {

struct PolicyValuePoint {
  std::string policy_name;
  std::optional<double> beta;
  double v_sat = 0.0;
  double v_ads = 0.0;
  std::string source = "true_value";  // or "dr_estimate"
};

struct ParetoRow {
  std::string policy_name;
  std::optional<double> beta;
  double sat_loss_pct = 0.0;
  double ads_loss_pct = 0.0;
  double v_sat = 0.0;
  double v_ads = 0.0;
  std::string source;
};

// Calibrates losses to a 0-100 scale anchored at the two single-objective
// optima: the points named "no_ads" (satisfaction optimum) and "max_ads"
// (ads optimum) must be present and distinct in both objectives.
std::vector<ParetoRow> pareto_losses(const std::vector<PolicyValuePoint>& values);

// Indices of the rows not dominated on (v_sat, v_ads), both maximized.
std::vector<std::size_t> non_dominated(const std::vector<ParetoRow>& rows);
bool dominates(double sat_a, double ads_a, double sat_b, double ads_b);

void write_pareto_csv(const std::string& path, const std::vector<ParetoRow>& rows);
void write_pareto_svg(const std::string& path, const std::vector<ParetoRow>& rows);

}  // namespace adload
