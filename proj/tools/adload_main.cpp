#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "adload/config.hpp"
#include "adload/pareto.hpp"
#include "adload/policy_training.hpp"
#include "adload/simulator.hpp"
#include "json.hpp"

namespace {

using adload::HarnessConfig;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidationFailure = 2;

HarnessConfig load_or_default(const std::string& path) {
  if (path.empty()) return HarnessConfig{};
  return adload::load_config(path);
}

// Policy specs: builtin names ("uniform", "no_ads", "max_ads", "static",
// "static:OFFSET,GAP", "fatigue") or a policy model file path.
adload::PolicyPtr resolve_policy(const std::string& spec, const HarnessConfig& cfg) {
  if (spec == "uniform") return adload::uniform_policy();
  if (spec == "no_ads") return adload::no_ads_policy();
  if (spec == "max_ads") return adload::max_ads_policy();
  if (spec == "fatigue") return adload::fatigue_policy(cfg.fatigue);
  if (spec == "static") return adload::static_policy(cfg.static_baseline);
  if (spec.rfind("static:", 0) == 0) {
    adload::StaticPolicyConfig sc;
    if (std::sscanf(spec.c_str(), "static:%d,%d", &sc.offset, &sc.post_gap) != 2)
      throw adload::config_error("bad static policy spec '" + spec + "'");
    return adload::static_policy(sc);
  }
  const adload::LoadedPolicy loaded = adload::load_policy(spec);
  if (loaded.constraints_hash != cfg.constraints.hash())
    throw adload::config_error(
        "policy file was trained against a different action-space constraint set "
        "(constraint hash mismatch)");
  return loaded.policy;
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_simulate_log(const std::string& config_path, const std::string& policy_spec,
                     std::size_t users, std::size_t max_records, std::uint64_t seed,
                     const std::string& out_path) {
  const HarnessConfig cfg = load_or_default(config_path);
  adload::EnvironmentConfig env = cfg.environment;
  env.constraints = cfg.constraints;
  const auto policy = resolve_policy(policy_spec, cfg);
  const auto records = adload::generate_log(*policy, env, users, seed, max_records);
  adload::write_log(out_path, records, cfg.constraints);
  std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& log_path, double significance, double tolerance,
                 std::uint64_t seed, const std::string& report_path) {
  const auto log = adload::read_log(log_path);
  adload::CatalogCache catalogs(log.constraints);
  const auto report =
      adload::validate_propensities(log.records, catalogs, significance, tolerance, seed);

  std::cout << "records: " << report.n_records << "\n";
  std::cout << "harmonic statistic: " << report.harmonic_statistic
            << (report.harmonic_pass ? "  [pass]" : "  [FAIL]") << "\n";
  std::cout << "arithmetic test: "
            << (report.arithmetic_skipped ? "skipped"
                                          : (report.arithmetic_pass ? "pass" : "FAIL"))
            << " (" << report.per_action.size() << " action checks)\n";
  for (const auto& check : report.per_action) {
    if (check.pass) continue;
    std::cout << "  action " << check.action_id << " in " << check.catalog_key.to_string()
              << ": observed " << check.observed_count << " expected " << check.expected_count
              << " (z=" << check.z_score << ")\n";
  }
  for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";

  if (!report_path.empty()) {
    ordered_json j;
    j["n_records"] = report.n_records;
    j["harmonic_statistic"] = report.harmonic_statistic;
    j["harmonic_pass"] = report.harmonic_pass;
    j["arithmetic_pass"] = report.arithmetic_pass;
    j["arithmetic_skipped"] = report.arithmetic_skipped;
    ordered_json checks = ordered_json::array();
    for (const auto& c : report.per_action)
      checks.push_back({{"catalog_key", c.catalog_key.to_string()},
                        {"action_id", c.action_id},
                        {"observed", c.observed_count},
                        {"expected", c.expected_count},
                        {"z", c.z_score},
                        {"pass", c.pass}});
    j["per_action"] = checks;
    j["warnings"] = report.warnings;
    std::ofstream out(report_path);
    out << j.dump(2) << '\n';
  }
  const bool ok = report.harmonic_pass && (report.arithmetic_skipped || report.arithmetic_pass);
  return ok ? kExitOk : kExitValidationFailure;
}

int cmd_fit_rewards(const std::string& config_path, const std::string& log_path,
                    const std::string& target, const std::string& out_path) {
  const HarnessConfig cfg = load_or_default(config_path);
  const auto log = adload::read_log(log_path);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& r : log.records) {
    if (target == "retention") {
      if (!r.retention_label) continue;
      const auto sig = adload::sat_signal_vector(r.sat_signals, cfg.reward.discount);
      x.emplace_back(sig.begin(), sig.end());
      y.push_back(static_cast<double>(*r.retention_label));
    } else if (target == "revenue") {
      if (!r.revenue_label) continue;
      x.push_back({r.ads_signals.impressions, r.ads_signals.clicks, r.ads_signals.installs});
      y.push_back(*r.revenue_label);
    } else {
      throw adload::config_error("fit-rewards: target must be 'retention' or 'revenue'");
    }
  }
  adload::ScalarizationConfig sc;
  sc.drop_constant_columns = true;
  const auto fit = adload::fit_scalarization(x, y, sc);
  std::cout << "target: " << target << "\nrows: " << y.size()
            << "\nachieved_correlation: " << fit.achieved_correlation
            << "\niterations: " << fit.iterations << (fit.converged ? " (converged)" : "")
            << "\nweights:";
  for (double w : fit.weights) std::cout << ' ' << w;
  std::cout << "\n";
  if (!out_path.empty()) {
    ordered_json j{{"target", target},
                   {"weights", fit.weights},
                   {"achieved_correlation", fit.achieved_correlation},
                   {"iterations", fit.iterations},
                   {"converged", fit.converged},
                   {"dropped_columns", fit.dropped_columns}};
    std::ofstream out(out_path);
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& log_path,
              const std::string& objective_name, double beta, const std::string& out_path,
              std::uint64_t seed, int rounds, std::size_t refresh_users) {
  HarnessConfig cfg = load_or_default(config_path);
  if (beta >= 0.0) cfg.reward.mix.beta = beta;
  cfg.training.seed = seed;
  const adload::TrainObjective objective = objective_name == "ipw"
                                               ? adload::TrainObjective::kIPW
                                               : adload::TrainObjective::kDR;
  adload::CatalogCache catalogs(cfg.constraints);
  adload::EnvironmentConfig env = cfg.environment;
  env.constraints = cfg.constraints;

  std::vector<adload::LoggedRecord> records;
  if (!log_path.empty()) records = adload::read_log(log_path).records;

  adload::TrainResult result;
  const int total_rounds = std::max(rounds, 1);
  for (int round = 0; round < total_rounds; ++round) {
    if (round > 0 || records.empty()) {
      // Fresh uniform-traffic slice, as in a periodic retraining loop.
      records = adload::generate_log(*adload::uniform_policy(), env, refresh_users,
                                     seed + 1000 + static_cast<std::uint64_t>(round));
      std::cout << "round " << round << ": generated " << records.size()
                << " uniform-logging records\n";
    }
    result = adload::train_policy(records, objective, cfg.reward, nullptr, catalogs,
                                  cfg.training);
    std::cout << "round " << round << ": best validation DR "
              << result.best_validation_value << " at epoch " << result.best_epoch << " ("
              << result.epochs_run << " run)\n";
    for (const auto& w : result.warnings) std::cout << "warning: " << w << "\n";
  }
  adload::save_policy(out_path, *result.policy, cfg.constraints);
  std::cout << "saved policy to " << out_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& log_path,
                 const std::string& policy_spec, const std::string& estimator, double clip,
                 bool with_true_value, const std::string& out_path) {
  const HarnessConfig cfg = load_or_default(config_path);
  const auto policy = resolve_policy(policy_spec, cfg);
  const auto log = adload::read_log(log_path);
  if (!(log.constraints == cfg.constraints))
    throw adload::config_error("evaluate: log constraints differ from config constraints");
  adload::CatalogCache catalogs(log.constraints);

  adload::EstimatorOptions options;
  if (clip > 0.0) options.clip = clip;

  std::vector<adload::ValueEstimate> estimates;
  const bool all = estimator == "all";
  adload::RewardModelPtr model;
  if (all || estimator == "dm" || estimator == "dr")
    model = adload::fit_reward_model(log.records, catalogs, cfg.reward, cfg.reward_model);
  if (all || estimator == "dm")
    estimates.push_back(adload::estimate_dm(*policy, *model, log.records, catalogs, options));
  if (all || estimator == "ipw")
    estimates.push_back(adload::estimate_ipw(*policy, log.records, catalogs, cfg.reward, options));
  if (all || estimator == "snips")
    estimates.push_back(
        adload::estimate_snips(*policy, log.records, catalogs, cfg.reward, options));
  if (all || estimator == "dr")
    estimates.push_back(
        adload::estimate_dr(*policy, *model, log.records, catalogs, cfg.reward, options));
  if (estimates.empty())
    throw adload::config_error("evaluate: unknown estimator '" + estimator + "'");

  std::ostringstream csv;
  csv << "estimator,value,std_error,n_records,clip_level\n";
  for (const auto& e : estimates) {
    std::cout << adload::to_string(e.estimator_kind) << ": " << e.value << " +/- " << e.std_error
              << " (n=" << e.n_records << ")\n";
    csv << adload::to_string(e.estimator_kind) << ',' << e.value << ',' << e.std_error << ','
        << e.n_records << ',';
    if (e.clip_level) csv << *e.clip_level;
    csv << '\n';
  }
  if (with_true_value) {
    adload::EnvironmentConfig env = cfg.environment;
    env.constraints = cfg.constraints;
    const auto tv = adload::true_policy_value(*policy, env, cfg.reward.weights,
                                              cfg.reward.discount, cfg.reward.mix);
    std::cout << "true value: " << tv.v_total << " (v_sat=" << tv.v_sat
              << ", v_ads=" << tv.v_ads << ", method="
              << (tv.method == adload::OracleMethod::kExactEnumeration ? "exact" : "monte_carlo")
              << ")\n";
    csv << "TRUE," << tv.v_total << ',' << tv.mc_std_error << ",,\n";
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << csv.str();
  }
  return kExitOk;
}

int cmd_pareto(const std::string& config_path, const std::string& betas_csv,
               const std::string& offsets_csv, std::size_t users, std::uint64_t seed,
               const std::string& out_dir) {
  HarnessConfig cfg = load_or_default(config_path);
  adload::EnvironmentConfig env = cfg.environment;
  env.constraints = cfg.constraints;
  std::filesystem::create_directories(out_dir);

  const auto betas = parse_list(betas_csv);
  const auto offsets = parse_list(offsets_csv);

  std::cout << "generating uniform log (" << users << " users)...\n";
  const auto records = adload::generate_log(*adload::uniform_policy(), env, users, seed);
  adload::CatalogCache catalogs(cfg.constraints);

  std::vector<adload::PolicyValuePoint> points;
  auto add_true_point = [&](const std::string& name, std::optional<double> beta,
                            const adload::Policy& policy) {
    const auto tv = adload::true_policy_value(policy, env, cfg.reward.weights,
                                              cfg.reward.discount, cfg.reward.mix);
    adload::PolicyValuePoint p;
    p.policy_name = name;
    p.beta = beta;
    p.v_sat = tv.v_sat;
    p.v_ads = tv.v_ads;
    p.source = "true_value";
    points.push_back(p);
    std::cout << "  " << name << ": v_sat=" << tv.v_sat << " v_ads=" << tv.v_ads << "\n";
    return tv;
  };

  std::cout << "baseline true values...\n";
  add_true_point("no_ads", std::nullopt, *adload::no_ads_policy());
  add_true_point("max_ads", std::nullopt, *adload::max_ads_policy());
  add_true_point("uniform", std::nullopt, *adload::uniform_policy());
  for (double off : offsets) {
    adload::StaticPolicyConfig sc{static_cast<int>(off), cfg.static_baseline.post_gap};
    add_true_point("static_" + std::to_string(static_cast<int>(off)), std::nullopt,
                   *adload::static_policy(sc));
  }
  add_true_point("fatigue", std::nullopt, *adload::fatigue_policy(cfg.fatigue));

  for (double beta : betas) {
    std::cout << "training beta=" << beta << " (DR objective)...\n";
    adload::RewardConfig reward = cfg.reward;
    reward.mix.beta = beta;
    const auto result = adload::train_policy(records, adload::TrainObjective::kDR, reward,
                                             nullptr, catalogs, cfg.training);
    for (const auto& w : result.warnings) std::cout << "warning: " << w << "\n";
    std::ostringstream name;
    name << "dr_beta_" << beta;
    add_true_point(name.str(), beta, *result.policy);
    const auto save_path = out_dir + "/" + name.str() + ".json";
    adload::save_policy(save_path, *result.policy, cfg.constraints);
  }

  const auto rows = adload::pareto_losses(points);
  adload::write_pareto_csv(out_dir + "/pareto.csv", rows);
  adload::write_pareto_svg(out_dir + "/pareto.svg", rows);
  ordered_json results = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json j{{"policy", r.policy_name},
                   {"sat_loss_pct", r.sat_loss_pct},
                   {"ads_loss_pct", r.ads_loss_pct},
                   {"v_sat", r.v_sat},
                   {"v_ads", r.v_ads},
                   {"source", r.source}};
    if (r.beta) j["beta"] = *r.beta;
    results.push_back(j);
  }
  std::ofstream(out_dir + "/results.json") << results.dump(2) << '\n';
  std::cout << "wrote " << out_dir << "/pareto.csv, pareto.svg, results.json\n";
  return kExitOk;
}

int cmd_report(const std::string& results_path, const std::string& out_dir) {
  std::ifstream in(results_path);
  if (!in) throw adload::config_error("report: cannot open " + results_path);
  ordered_json results;
  in >> results;
  std::vector<adload::ParetoRow> rows;
  for (const auto& j : results) {
    adload::ParetoRow r;
    r.policy_name = j.at("policy").get<std::string>();
    if (j.contains("beta")) r.beta = j.at("beta").get<double>();
    r.sat_loss_pct = j.at("sat_loss_pct").get<double>();
    r.ads_loss_pct = j.at("ads_loss_pct").get<double>();
    r.v_sat = j.at("v_sat").get<double>();
    r.v_ads = j.at("v_ads").get<double>();
    r.source = j.at("source").get<std::string>();
    rows.push_back(r);
  }
  std::filesystem::create_directories(out_dir);
  adload::write_pareto_csv(out_dir + "/pareto.csv", rows);
  adload::write_pareto_svg(out_dir + "/pareto.svg", rows);
  std::cout << "policy,sat_loss_pct,ads_loss_pct\n";
  for (const auto& r : rows)
    std::cout << r.policy_name << ',' << r.sat_loss_pct << ',' << r.ads_loss_pct << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-policy learning and evaluation toolkit for feed ad-load balancing"};
  app.require_subcommand(1);

  std::string config_path, log_path, out_path, out_dir = ".", policy_spec = "uniform";
  std::string estimator = "all", target = "retention", objective = "dr", results_path;
  std::string betas_csv = "0.7,0.8,0.9", offsets_csv = "2,3,4";
  std::size_t users = 2000, max_records = 0, refresh_users = 2000;
  std::uint64_t seed = 1;
  double clip = 0.0, beta = -1.0, significance = 0.05, tolerance = 0.05;
  int rounds = 1;
  bool with_true_value = false;

  auto* sim = app.add_subcommand("simulate-log", "Generate a synthetic bandit log");
  sim->add_option("--config", config_path, "Harness config file (JSON)");
  sim->add_option("--policy", policy_spec, "Logging policy spec (default uniform)");
  sim->add_option("--users", users, "Sessions to simulate");
  sim->add_option("--records", max_records, "Cap on emitted records");
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--out", out_path, "Output log path")->required();

  auto* val = app.add_subcommand("validate-propensities", "Run the propensity score tests");
  val->add_option("--log", log_path, "Input log")->required();
  val->add_option("--significance", significance, "Arithmetic test significance");
  val->add_option("--tolerance", tolerance, "Harmonic test tolerance around 2");
  val->add_option("--seed", seed, "Resampling seed");
  val->add_option("--report", out_path, "Optional JSON report path");

  auto* fit = app.add_subcommand("fit-rewards", "Fit scalarization weights on logged labels");
  fit->add_option("--config", config_path, "Harness config file");
  fit->add_option("--log", log_path, "Input log")->required();
  fit->add_option("--target", target, "retention|revenue");
  fit->add_option("--out", out_path, "Output weights JSON");

  auto* train = app.add_subcommand("train-policy", "Counterfactual policy learning");
  train->add_option("--config", config_path, "Harness config file");
  train->add_option("--log", log_path, "Training log (omit to simulate one)");
  train->add_option("--objective", objective, "ipw|dr");
  train->add_option("--beta", beta, "Reward mix override");
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--rounds", rounds, "Retraining rounds with fresh uniform slices");
  train->add_option("--users", refresh_users, "Sessions per refresh round");
  train->add_option("--out", out_path, "Output policy file")->required();

  auto* eval = app.add_subcommand("evaluate", "Estimate a policy's value from a log");
  eval->add_option("--config", config_path, "Harness config file");
  eval->add_option("--log", log_path, "Evaluation log")->required();
  eval->add_option("--policy", policy_spec, "Policy spec or model file")->required();
  eval->add_option("--estimator", estimator, "all|dm|ipw|snips|dr");
  eval->add_option("--clip", clip, "IPW weight cap");
  eval->add_flag("--true-value", with_true_value, "Also compute the simulator ground truth");
  eval->add_option("--out", out_path, "Output CSV path");

  auto* pareto = app.add_subcommand("pareto", "Beta sweep + baselines on true values");
  pareto->add_option("--config", config_path, "Harness config file");
  pareto->add_option("--betas", betas_csv, "Comma-separated beta values");
  pareto->add_option("--offsets", offsets_csv, "Static baseline offsets");
  pareto->add_option("--users", users, "Sessions for the training log");
  pareto->add_option("--seed", seed, "RNG seed");
  pareto->add_option("--out-dir", out_dir, "Output directory");

  auto* report = app.add_subcommand("report", "Re-emit tables and plot data from results");
  report->add_option("--results", results_path, "results.json from a pareto run")->required();
  report->add_option("--out-dir", out_dir, "Output directory");

  auto* init = app.add_subcommand("init-config", "Write the default config file");
  init->add_option("--out", out_path, "Output config path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (sim->parsed())
      return cmd_simulate_log(config_path, policy_spec, users, max_records, seed, out_path);
    if (val->parsed()) return cmd_validate(log_path, significance, tolerance, seed, out_path);
    if (fit->parsed()) return cmd_fit_rewards(config_path, log_path, target, out_path);
    if (train->parsed())
      return cmd_train(config_path, log_path, objective, beta, out_path, seed, rounds,
                       refresh_users);
    if (eval->parsed())
      return cmd_evaluate(config_path, log_path, policy_spec, estimator, clip, with_true_value,
                          out_path);
    if (pareto->parsed())
      return cmd_pareto(config_path, betas_csv, offsets_csv, users, seed, out_dir);
    if (report->parsed()) return cmd_report(results_path, out_dir);
    if (init->parsed()) {
      adload::save_config(out_path, HarnessConfig{});
      std::cout << "wrote " << out_path << "\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
