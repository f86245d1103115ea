#include "adload/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace adload {

std::vector<ParetoRow> pareto_losses(const std::vector<PolicyValuePoint>& values) {
  const PolicyValuePoint* no_ads = nullptr;
  const PolicyValuePoint* max_ads = nullptr;
  for (const auto& v : values) {
    if (v.policy_name == "no_ads") no_ads = &v;
    if (v.policy_name == "max_ads") max_ads = &v;
  }
  if (no_ads == nullptr || max_ads == nullptr)
    throw std::invalid_argument("pareto_losses: anchors 'no_ads' and 'max_ads' required");
  const double sat_span = no_ads->v_sat - max_ads->v_sat;
  const double ads_span = max_ads->v_ads - no_ads->v_ads;
  if (sat_span == 0.0 || ads_span == 0.0)
    throw std::invalid_argument("pareto_losses: degenerate anchors (equal objective values)");

  std::vector<ParetoRow> rows;
  rows.reserve(values.size());
  for (const auto& v : values) {
    ParetoRow row;
    row.policy_name = v.policy_name;
    row.beta = v.beta;
    row.v_sat = v.v_sat;
    row.v_ads = v.v_ads;
    row.source = v.source;
    row.sat_loss_pct = 100.0 * (no_ads->v_sat - v.v_sat) / sat_span;
    row.ads_loss_pct = 100.0 * (max_ads->v_ads - v.v_ads) / ads_span;
    rows.push_back(std::move(row));
  }
  return rows;
}

bool dominates(double sat_a, double ads_a, double sat_b, double ads_b) {
  return sat_a >= sat_b && ads_a >= ads_b && (sat_a > sat_b || ads_a > ads_b);
}

std::vector<std::size_t> non_dominated(const std::vector<ParetoRow>& rows) {
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < rows.size() && !dominated; ++j)
      if (j != i && dominates(rows[j].v_sat, rows[j].v_ads, rows[i].v_sat, rows[i].v_ads))
        dominated = true;
    if (!dominated) front.push_back(i);
  }
  return front;
}

void write_pareto_csv(const std::string& path, const std::vector<ParetoRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_pareto_csv: cannot open " + path);
  out << "policy,beta,sat_loss_pct,ads_loss_pct,v_sat,v_ads,source\n";
  for (const auto& r : rows) {
    out << r.policy_name << ',';
    if (r.beta)
      out << *r.beta;
    out << ',' << r.sat_loss_pct << ',' << r.ads_loss_pct << ',' << r.v_sat << ',' << r.v_ads
        << ',' << r.source << '\n';
  }
}

void write_pareto_svg(const std::string& path, const std::vector<ParetoRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_pareto_svg: cannot open " + path);
  const int w = 640, h = 480, margin = 60;
  auto x_of = [&](double sat_loss) {
    return margin + (w - 2 * margin) * std::clamp(sat_loss, -5.0, 105.0) / 100.0;
  };
  auto y_of = [&](double ads_loss) {
    return h - margin - (h - 2 * margin) * std::clamp(ads_loss, -5.0, 105.0) / 100.0;
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << h - margin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << h - 15
      << "\" text-anchor=\"middle\" font-size=\"14\">SAT loss (%)</text>\n";
  out << "<text x=\"18\" y=\"" << h / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 " << h / 2
      << ")\">Ads loss (%)</text>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    out << "<text x=\"" << x_of(tick) << "\" y=\"" << h - margin + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << tick << "</text>\n";
    out << "<text x=\"" << margin - 8 << "\" y=\"" << y_of(tick) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick << "</text>\n";
  }
  const auto front = non_dominated(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool on_front = std::find(front.begin(), front.end(), i) != front.end();
    const auto& r = rows[i];
    out << "<circle cx=\"" << x_of(r.sat_loss_pct) << "\" cy=\"" << y_of(r.ads_loss_pct)
        << "\" r=\"5\" fill=\"" << (on_front ? "#d62728" : "#1f77b4") << "\"/>\n";
    out << "<text x=\"" << x_of(r.sat_loss_pct) + 8 << "\" y=\"" << y_of(r.ads_loss_pct) - 6
        << "\" font-size=\"11\">" << r.policy_name;
    if (r.beta) out << " (b=" << *r.beta << ")";
    out << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace adload
