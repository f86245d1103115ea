#include "adload/pareto.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adload/rng.hpp"
#include "doctest.h"

using namespace adload;

namespace {

std::vector<PolicyValuePoint> sample_points() {
  return {
      {"no_ads", std::nullopt, 1.0, 0.0, "true_value"},
      {"max_ads", std::nullopt, 0.2, 0.8, "true_value"},
      {"mid", std::nullopt, 0.6, 0.4, "true_value"},
      {"learned", 0.8, 0.9, 0.7, "true_value"},
      {"weak", std::nullopt, 0.3, 0.1, "dr_estimate"},
  };
}

}  // namespace

TEST_SUITE_BEGIN("pareto");

TEST_CASE("anchors calibrate to (0,100) and (100,0); midpoints to (50,50)") {
  const auto rows = pareto_losses(sample_points());
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].sat_loss_pct == doctest::Approx(0.0));
  CHECK(rows[0].ads_loss_pct == doctest::Approx(100.0));
  CHECK(rows[1].sat_loss_pct == doctest::Approx(100.0));
  CHECK(rows[1].ads_loss_pct == doctest::Approx(0.0));
  CHECK(rows[2].sat_loss_pct == doctest::Approx(50.0));
  CHECK(rows[2].ads_loss_pct == doctest::Approx(50.0));
}

TEST_CASE("losses are invariant to positive affine rescaling of an objective") {
  auto points = sample_points();
  const auto rows = pareto_losses(points);
  for (auto& p : points) p.v_sat = 3.5 * p.v_sat - 11.0;
  const auto rescaled_sat = pareto_losses(points);
  for (auto& p : points) p.v_ads = 0.25 * p.v_ads + 2.0;
  const auto rescaled_both = pareto_losses(points);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].sat_loss_pct == doctest::Approx(rescaled_sat[i].sat_loss_pct).epsilon(1e-9));
    CHECK(rows[i].ads_loss_pct == doctest::Approx(rescaled_both[i].ads_loss_pct).epsilon(1e-9));
  }
}

TEST_CASE("the non-dominated subset is the same on raw values and on losses") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PolicyValuePoint> points = {{"no_ads", std::nullopt, 1.0, 0.0, "true_value"},
                                            {"max_ads", std::nullopt, 0.0, 1.0, "true_value"}};
    for (int i = 0; i < 10; ++i)
      points.push_back({"p" + std::to_string(i), std::nullopt, rng.uniform(), rng.uniform(),
                        "true_value"});
    const auto rows = pareto_losses(points);
    const auto front_raw = non_dominated(rows);

    // Dominance computed on calibrated losses (lower is better both ways).
    std::vector<std::size_t> front_loss;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < rows.size() && !dominated; ++j) {
        if (j == i) continue;
        const bool weakly_better = rows[j].sat_loss_pct <= rows[i].sat_loss_pct &&
                                   rows[j].ads_loss_pct <= rows[i].ads_loss_pct;
        const bool strictly = rows[j].sat_loss_pct < rows[i].sat_loss_pct ||
                              rows[j].ads_loss_pct < rows[i].ads_loss_pct;
        dominated = weakly_better && strictly;
      }
      if (!dominated) front_loss.push_back(i);
    }
    CHECK(front_raw == front_loss);
  }
}

TEST_CASE("degenerate anchors are rejected") {
  std::vector<PolicyValuePoint> points = {{"no_ads", std::nullopt, 1.0, 0.5, "true_value"},
                                          {"max_ads", std::nullopt, 1.0, 0.5, "true_value"}};
  CHECK_THROWS_AS((void)pareto_losses(points), std::invalid_argument);
  CHECK_THROWS_AS((void)pareto_losses({}), std::invalid_argument);
}

TEST_CASE("csv and svg outputs are written") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto rows = pareto_losses(sample_points());
  const std::string csv = (dir / "adload_pareto.csv").string();
  const std::string svg = (dir / "adload_pareto.svg").string();
  write_pareto_csv(csv, rows);
  write_pareto_svg(svg, rows);
  std::ifstream csv_in(csv);
  std::string header;
  std::getline(csv_in, header);
  CHECK(header == "policy,beta,sat_loss_pct,ads_loss_pct,v_sat,v_ads,source");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(csv_in, line)) ++lines;
  CHECK(lines == rows.size());
  std::ifstream svg_in(svg);
  const std::string svg_text((std::istreambuf_iterator<char>(svg_in)), {});
  CHECK(svg_text.find("<svg") != std::string::npos);
  CHECK(svg_text.find("circle") != std::string::npos);
  std::remove(csv.c_str());
  std::remove(svg.c_str());
}

TEST_SUITE_END();
