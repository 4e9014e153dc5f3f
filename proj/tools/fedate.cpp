// fedate: federated ATE experiments from the command line.
#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedate/data.hpp"
#include "fedate/estimators.hpp"
#include "fedate/harness.hpp"
#include "fedate/protocol.hpp"
#include "fedate/scenarios.hpp"
#include "fedate/semisynthetic.hpp"
#include "fedate/theory.hpp"

using namespace fedate;

namespace {

std::vector<EstimatorId> parse_list(const std::string& list) {
  if (list == "all") return all_estimators();
  std::vector<EstimatorId> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_estimator(item));
  }
  if (out.empty()) throw Error(ErrorKind::Value, "empty estimator list");
  return out;
}

// T=..,E=..,B=..,eta=..|auto,tol=..
FedAvgConfig parse_fedavg(const std::string& text, FedAvgConfig cfg) {
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, "expected key=value in --fedavg: " + item);
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      if (key == "T") {
        cfg.T = std::stoul(value);
      } else if (key == "E") {
        cfg.E = std::stoul(value);
      } else if (key == "B") {
        cfg.B = std::stoul(value);
      } else if (key == "eta") {
        if (value == "auto") {
          cfg.eta.reset();
        } else {
          cfg.eta = std::stod(value);
        }
      } else if (key == "tol") {
        cfg.convergence_tol = std::stod(value);
      } else {
        throw Error(ErrorKind::Parse, "unknown --fedavg key " + key);
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Parse, "bad --fedavg value for " + key);
    }
  }
  cfg.validate();
  return cfg;
}

EstimatorId with_adjustment(EstimatorId id) {
  switch (id.kind) {
    case EstimatorKind::Pool: id.kind = EstimatorKind::PoolAdj; break;
    case EstimatorKind::GD: id.kind = EstimatorKind::GDAdj; break;
    case EstimatorKind::OneShotSW: id.kind = EstimatorKind::OneShotSWAdj; break;
    case EstimatorKind::OneShotIVW: id.kind = EstimatorKind::OneShotIVWAdj; break;
    default:
      if (!is_adjusted(id.kind)) throw Error(ErrorKind::Value, estimator_name(id) + " has no adjusted form");
  }
  return id;
}

// homogeneous trial like the presets with d covariates, for the bench command
ScenarioConfig bench_scenario(Eigen::Index d, std::size_t K) {
  ScenarioConfig cfg;
  cfg.name = "bench";
  cfg.d = d;
  cfg.arm1.c = -1.85;
  cfg.arm0.c = -2.0;
  cfg.arm1.beta = Vector::LinSpaced(d, -1.75, 0.5);
  cfg.arm0.beta = Vector::LinSpaced(d, -1.8, 0.0);
  cfg.min_arm_size = static_cast<std::size_t>(d) + 2;
  for (std::size_t k = 0; k < K; ++k) {
    StudySpec s;
    s.n = std::max<std::size_t>(50, 10 * static_cast<std::size_t>(d + 1));
    s.mu = Vector::Constant(d, 1.0);
    s.mu.tail(d / 2).setConstant(-1.0);
    s.sigma = equicorrelated(d, 0.5, 0.5);
    cfg.studies.push_back(s);
  }
  return cfg;
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

void print_rows(const ExperimentResult& res) {
  std::cerr << "true tau " << res.true_tau << '\n';
  write_rows_csv(res.rows, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated average treatment effect estimators"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo over a synthetic scenario");
  std::string scenario = "homog-large", est_list = "all", out_path, dump_path, fedavg_text;
  std::size_t reps = 2000;
  std::uint64_t seed = 1;
  bool serial = false;
  sim->add_option("--scenario", scenario, "preset name or JSON file");
  sim->add_option("--estimators", est_list, "all, or a comma list");
  sim->add_option("--reps", reps)->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed);
  sim->add_option("--dump-reps", dump_path, "per-replication CSV");
  sim->add_option("--fedavg", fedavg_text,
                  "T=..,E=..,B=..,eta=..|auto,tol=.. (default T=5000000,E=1,B=full,eta=auto,tol=1e-10)");
  sim->add_flag("--serial", serial, "run replications on one thread");
  sim->add_option("--out", out_path, "report .csv or .json")->required();

  // bootstrap
  auto* boot = app.add_subcommand("bootstrap", "Stratified bootstrap with regenerated outcomes");
  std::string data_path, outcome = "linear";
  boot->add_option("--data", data_path, "CSV file; the built-in 13-site stand-in when omitted");
  boot->add_option("--outcome", outcome, "linear or polynomial")->check(CLI::IsMember({"linear", "polynomial"}));
  boot->add_option("--estimators", est_list);
  boot->add_option("--reps", reps)->check(CLI::PositiveNumber);
  boot->add_option("--seed", seed);
  boot->add_option("--dump-reps", dump_path);
  boot->add_option("--fedavg", fedavg_text);
  boot->add_flag("--serial", serial);
  boot->add_option("--out", out_path)->required();

  // estimate
  auto* est = app.add_subcommand("estimate", "One estimator on a CSV dataset");
  std::string est_name;
  bool adjusted = false;
  est->add_option("--data", data_path)->required();
  est->add_option("--estimator", est_name)->required();
  est->add_flag("--adjusted", adjusted, "use the study-adjusted variant");
  est->add_option("--fedavg", fedavg_text);
  est->add_option("--out", out_path, "JSON file, stdout when omitted");
  bool with_log = false;
  est->add_flag("--log", with_log, "include the per-message log (large for long FedAvg runs)");

  // advise
  auto* adv = app.add_subcommand("advise", "Recommend estimators from scenario flags");
  ScenarioFlags flags{false, false, false, false, false};
  adv->add_flag("--local-full-rank", flags.local_full_rank);
  adv->add_flag("--federated-full-rank", flags.federated_full_rank);
  adv->add_flag("--same-x-dist", flags.same_covariate_distribution);
  adv->add_flag("--study-effects", flags.study_effects);
  adv->add_flag("--same-p", flags.same_treatment_probabilities);

  // bench
  auto* bench = app.add_subcommand("bench", "Communication ledger for one estimator");
  Eigen::Index d = 10;
  std::size_t K = 5, T = 0;
  bench->add_option("--estimator", est_name)->required();
  bench->add_option("--d", d)->check(CLI::PositiveNumber);
  bench->add_option("--K", K)->check(CLI::Range(2, 1000));
  bench->add_option("--T", T, "fixed FedAvg rounds (explicit eta 1e-2, no early stop)");
  bench->add_option("--seed", seed);

  // generate
  auto* gen = app.add_subcommand("generate", "Draw one dataset as CSV");
  gen->add_option("--scenario", scenario, "preset, JSON file, or 'stand-in'");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    EstimateOptions options;
    // auto eta is conservative; a few thousand rounds rarely reach the 1e-10 step
    options.gd.fedavg.T = 5000000;
    if (!fedavg_text.empty()) options.gd.fedavg = parse_fedavg(fedavg_text, options.gd.fedavg);

    if (*sim) {
      ExperimentPlan plan;
      plan.scenario = load_scenario(scenario);
      plan.estimators = parse_list(est_list);
      plan.replications = reps;
      plan.base_seed = seed;
      plan.options = options;
      plan.parallel = !serial;
      const auto res = run_monte_carlo(plan);
      emit_report(res.rows, format_from_path(out_path), out_path);
      if (!dump_path.empty()) emit_replications(res, plan.estimators, dump_path);
      print_rows(res);
    } else if (*boot) {
      const StandInDesign design;
      const FederatedDataset fed = data_path.empty() ? stand_in_dataset(design) : load_csv(data_path);
      ExperimentPlan plan;
      plan.estimators = parse_list(est_list);
      plan.replications = reps;
      plan.base_seed = seed;
      plan.options = options;
      plan.parallel = !serial;
      RegenerationSpec spec = stand_in_outcomes(design, outcome == "linear" ? OutcomeMode::Linear : OutcomeMode::Polynomial);
      if (!data_path.empty()) {
        // per-study treatment rate from the file; coefficients need d >= 15
        if (fed.d != kStandInCovariates) throw Error(ErrorKind::Dimension, "outcome model expects 15 covariates");
        spec.p_by_study.resize(static_cast<Eigen::Index>(fed.K()));
        for (std::size_t k = 0; k < fed.K(); ++k) {
          spec.p_by_study(static_cast<Eigen::Index>(k)) =
              static_cast<double>(fed.studies[k].n_arm(1)) / static_cast<double>(fed.studies[k].n());
        }
      }
      plan.regenerate = spec;
      const auto res = run_bootstrap(fed, plan);
      emit_report(res.rows, format_from_path(out_path), out_path);
      if (!dump_path.empty()) emit_replications(res, plan.estimators, dump_path);
      print_rows(res);
    } else if (*est) {
      const FederatedDataset fed = load_csv(data_path);
      EstimatorId id = parse_estimator(est_name);
      if (adjusted) id = with_adjustment(id);
      options.gd.fedavg.keep_log = with_log;
      const auto report = with_log ? run_protocol(fed, id, options) : estimate(fed, id, options);
      nlohmann::json j = {{"estimator", estimator_name(report.id)}, {"tau_hat", report.tau_hat}};
      j["plugin_variance"] = report.plugin_variance ? nlohmann::json(*report.plugin_variance) : nlohmann::json(nullptr);
      j["communication"] = report.comm.to_json();
      write_json(j, out_path);
    } else if (*adv) {
      const Recommendation rec = recommend(flags);
      nlohmann::json names = nlohmann::json::array();
      for (const auto& id : rec.estimators) names.push_back(estimator_name(id));
      write_json({{"recommendation", names}, {"dm_biased", rec.dm_biased}, {"advice", rec.advice}}, "");
    } else if (*bench) {
      const EstimatorId id = parse_estimator(est_name);
      const ScenarioConfig cfg = bench_scenario(d, K);
      RngStream rng(seed, 0);
      const FederatedDataset fed = generate(cfg, rng);
      if (T > 0) {
        options.gd.fedavg.T = T;
        options.gd.fedavg.eta = 1e-2;
        options.gd.fedavg.convergence_tol = 0.0;
      }
      const auto report = run_protocol(fed, id, options);
      nlohmann::json j = report.comm.to_json();
      j["estimator"] = estimator_name(id);
      j["tau_hat"] = report.tau_hat;
      write_json(j, "");
    } else if (*gen) {
      FederatedDataset fed;
      if (scenario == "stand-in") {
        StandInDesign design;
        design.seed = seed;
        fed = stand_in_dataset(design);
      } else {
        RngStream rng(seed, 0);
        fed = generate(load_scenario(scenario), rng);
      }
      std::ofstream out(out_path);
      if (!out) throw Error(ErrorKind::Io, "cannot open " + out_path);
      write_csv(fed, out);
      if (!out) throw Error(ErrorKind::Io, "write failed for " + out_path);
    }
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return is_numerical(e.kind()) ? 3 : 2;
  }
  return 0;
}
