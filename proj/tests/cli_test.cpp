#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adload/config.hpp"
#include "adload/dataset.hpp"
#include "adload/simulator.hpp"
#include "doctest.h"
#include "json.hpp"

#ifndef ADLOAD_CLI_PATH
#define ADLOAD_CLI_PATH "adload"
#endif

using namespace adload;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("adload_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string command = std::string(ADLOAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("config file round-trips the reward weights and discount parameters") {
  TempDir dir;
  HarnessConfig cfg;
  cfg.reward.weights.sat_weights[0] = 0.1234;
  cfg.reward.weights.ads_weights[2] = 0.9;
  cfg.reward.discount.alpha = 0.35;
  cfg.reward.discount.session_discount_scale = 2.5;
  cfg.reward.mix.beta = 0.65;
  cfg.constraints.min_position_difference = 3;
  save_config(dir.file("cfg.json"), cfg);
  const HarnessConfig loaded = load_config(dir.file("cfg.json"));
  CHECK(loaded.reward.weights.sat_weights == cfg.reward.weights.sat_weights);
  CHECK(loaded.reward.weights.ads_weights == cfg.reward.weights.ads_weights);
  CHECK(loaded.reward.discount.alpha == cfg.reward.discount.alpha);
  CHECK(loaded.reward.discount.session_discount_scale ==
        cfg.reward.discount.session_discount_scale);
  CHECK(loaded.reward.mix.beta == cfg.reward.mix.beta);
  CHECK(loaded.constraints == cfg.constraints);
  CHECK(loaded.environment.constraints == cfg.constraints);
}

TEST_CASE("end-to-end pipeline: simulate, validate, train, evaluate, pareto, report") {
  TempDir dir;
  const std::string cfg_path = dir.file("cfg.json");

  // Fast training settings for the smoke run.
  HarnessConfig cfg;
  cfg.training.epochs = 40;
  cfg.training.patience = 40;
  save_config(cfg_path, cfg);

  REQUIRE(run_cli("init-config --out " + dir.file("default_cfg.json")) == 0);
  REQUIRE(fs::exists(dir.file("default_cfg.json")));

  const std::string log_path = dir.file("log.jsonl");
  REQUIRE(run_cli("simulate-log --config " + cfg_path + " --users 30000 --records 30000 --seed 5 --out " +
                  log_path) == 0);
  const auto log = read_log(log_path);
  CHECK(log.records.size() >= 30000);

  SUBCASE("clean log validates with exit 0") {
    CHECK(run_cli("validate-propensities --log " + log_path + " --seed 3 --report " +
                  dir.file("report.json")) == 0);
    CHECK(fs::exists(dir.file("report.json")));
  }

  SUBCASE("corrupted log fails validation with exit 2") {
    auto corrupted = log.records;
    for (auto& r : corrupted)
      if (r.action_id == 1) r.action_id = 0;  // sampler bug, propensities still claim uniform
    const std::string bad_path = dir.file("bad.jsonl");
    write_log(bad_path, corrupted, log.constraints);
    CHECK(run_cli("validate-propensities --log " + bad_path) == 2);
  }

  SUBCASE("fit-rewards emits a scalarization file") {
    REQUIRE(run_cli("fit-rewards --config " + cfg_path + " --log " + log_path +
                    " --target revenue --out " + dir.file("weights.json")) == 0);
    std::ifstream in(dir.file("weights.json"));
    nlohmann::json j;
    in >> j;
    CHECK(j.at("weights").size() == 3);
    CHECK(std::abs(j.at("achieved_correlation").get<double>()) <= 1.0);
    CHECK(j.at("achieved_correlation").get<double>() > 0.3);  // revenue is ads-driven
  }

  SUBCASE("train, evaluate, constraint-hash guard") {
    const std::string policy_path = dir.file("policy.json");
    REQUIRE(run_cli("train-policy --config " + cfg_path + " --log " + log_path +
                    " --objective dr --beta 0.8 --seed 9 --out " + policy_path) == 0);
    REQUIRE(fs::exists(policy_path));
    CHECK(run_cli("evaluate --config " + cfg_path + " --log " + log_path + " --policy " +
                  policy_path + " --estimator all --out " + dir.file("eval.csv")) == 0);
    std::ifstream csv(dir.file("eval.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "estimator,value,std_error,n_records,clip_level");
    std::size_t rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 4);  // DM, IPW, SNIPS, DR

    // A config with different pruning constraints must refuse the policy.
    HarnessConfig other = cfg;
    other.constraints.min_position_difference = 3;
    save_config(dir.file("other_cfg.json"), other);
    CHECK(run_cli("evaluate --config " + dir.file("other_cfg.json") + " --log " + log_path +
                  " --policy " + policy_path) == 1);
  }

  SUBCASE("builtin policy specs evaluate against the log") {
    CHECK(run_cli("evaluate --config " + cfg_path + " --log " + log_path +
                  " --policy static:3,5 --estimator ipw --clip 10") == 0);
    CHECK(run_cli("evaluate --config " + cfg_path + " --log " + log_path +
                  " --policy fatigue --estimator snips") == 0);
    CHECK(run_cli("evaluate --config " + cfg_path + " --log " + log_path +
                  " --policy no_ads --estimator dm --true-value --out " +
                  dir.file("true.csv")) == 0);
  }

  SUBCASE("retraining rounds refresh from fresh uniform slices") {
    const std::string policy_path = dir.file("rounds_policy.json");
    REQUIRE(run_cli("train-policy --config " + cfg_path + " --rounds 2 --users 1500 " +
                    "--objective ipw --beta 0.8 --seed 4 --out " + policy_path) == 0);
    CHECK(fs::exists(policy_path));
  }

  SUBCASE("pareto run emits table, plot data and vector graphics") {
    const std::string out_dir = dir.file("pareto_out");
    REQUIRE(run_cli("pareto --config " + cfg_path + " --betas 0.8 --offsets 3 --users 6000 " +
                    "--seed 11 --out-dir " + out_dir) == 0);
    REQUIRE(fs::exists(out_dir + "/pareto.csv"));
    REQUIRE(fs::exists(out_dir + "/pareto.svg"));
    REQUIRE(fs::exists(out_dir + "/results.json"));

    std::ifstream in(out_dir + "/results.json");
    nlohmann::json rows;
    in >> rows;
    // no_ads, max_ads, uniform, static3, fatigue, dr_beta_0.8
    CHECK(rows.size() == 6);
    double uniform_sat = 0, uniform_ads = 0, learned_sat = 0, learned_ads = 0;
    bool saw_learned = false;
    for (const auto& row : rows) {
      if (row.at("policy") == "uniform") {
        uniform_sat = row.at("v_sat").get<double>();
        uniform_ads = row.at("v_ads").get<double>();
      }
      if (row.contains("beta")) {
        saw_learned = true;
        learned_sat = row.at("v_sat").get<double>();
        learned_ads = row.at("v_ads").get<double>();
      }
    }
    REQUIRE(saw_learned);
    // The learned row must not be dominated by uniform.
    const bool dominated_by_uniform = uniform_sat >= learned_sat && uniform_ads >= learned_ads &&
                                      (uniform_sat > learned_sat || uniform_ads > learned_ads);
    CHECK_FALSE(dominated_by_uniform);

    CHECK(run_cli("report --results " + out_dir + "/results.json --out-dir " +
                  dir.file("report_out")) == 0);
    CHECK(fs::exists(dir.file("report_out") + "/pareto.csv"));
    CHECK(fs::exists(dir.file("report_out") + "/pareto.svg"));
  }
}

TEST_CASE("unknown flags exit nonzero") {
  CHECK(run_cli("evaluate --no-such-flag") != 0);
  CHECK(run_cli("definitely-not-a-subcommand") != 0);
}

TEST_SUITE_END();
