// Command-line front end: covariate-balancing ATE estimation from CSV data
// and the Monte Carlo simulation harness.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cbal/io.hpp"

namespace {

cbal::Family parse_family(const std::string& s) {
  if (s == "gaussian") return cbal::Family::Gaussian();
  if (s == "poisson") return cbal::Family::Poisson();
  if (s.rfind("binomial:", 0) == 0) {
    const std::string m = s.substr(9);
    try {
      return cbal::Family::Binomial(std::stoi(m));
    } catch (const std::exception&) {
      throw cbal::ConfigError("invalid binomial trial count '" + m + "'");
    }
  }
  if (s == "binomial") {
    throw cbal::ConfigError("binomial family needs a trial count: binomial:<m>");
  }
  throw cbal::ConfigError("unknown family '" + s +
                          "' (expected gaussian, binomial:<m> or poisson)");
}

cbal::PropensityWeight::Selector parse_w1(const std::string& s) {
  if (s == "pi") return cbal::PropensityWeight::Selector::pi;
  if (s == "one") return cbal::PropensityWeight::Selector::one;
  if (s == "bpp") return cbal::PropensityWeight::Selector::bpp;
  throw cbal::ConfigError("unknown w1 selector '" + s + "' (expected pi, one or bpp)");
}

cbal::OutcomeWeight::Selector parse_w2(const std::string& s) {
  if (s == "one") return cbal::OutcomeWeight::Selector::one;
  if (s == "inv-pi") return cbal::OutcomeWeight::Selector::inv_pi;
  if (s == "ps-adjusted") return cbal::OutcomeWeight::Selector::ps_adjusted;
  throw cbal::ConfigError("unknown w2 selector '" + s +
                          "' (expected one, inv-pi or ps-adjusted)");
}

cbal::Scenario parse_scenario(const std::string& s) {
  if (s == "both-correct") return cbal::Scenario::both_correct;
  if (s == "ps-misspecified") return cbal::Scenario::ps_misspecified;
  if (s == "outcome-misspecified") return cbal::Scenario::outcome_misspecified;
  if (s == "both-misspecified") return cbal::Scenario::both_misspecified;
  throw cbal::ConfigError("unknown scenario '" + s + "'");
}

struct EstimatorFlags {
  std::string family = "gaussian";
  std::string w1 = "one";
  std::string w2 = "ps-adjusted";
  double lambda = -1.0;
  double lambda_outcome = -1.0;
  int cv_folds = 5;
  std::uint64_t seed = 0;
  double level = 0.95;
  bool lambda_given = false;
  bool lambda_outcome_given = false;
  bool cv_folds_given = false;
  bool w1_given = false;
  bool family_given = false;
};

void add_estimator_flags(CLI::App* cmd, EstimatorFlags& f) {
  cmd->add_option("--family", f.family,
                  "Outcome family: gaussian, binomial:<m> or poisson");
  cmd->add_option("--w1", f.w1, "Propensity weight: pi, one or bpp");
  cmd->add_option("--w2", f.w2, "Outcome weight: one, inv-pi or ps-adjusted");
  cmd->add_option("--lambda", f.lambda, "Fixed propensity penalty (disables CV)");
  cmd->add_option("--lambda-outcome", f.lambda_outcome,
                  "Fixed outcome penalty (disables CV)");
  cmd->add_option("--cv-folds", f.cv_folds, "Cross-validation fold count");
  cmd->add_option("--seed", f.seed, "Seed for fold assignment / simulation");
  cmd->add_option("--level", f.level, "Confidence level");
}

cbal::EstimatorConfig build_config(const CLI::App* cmd, EstimatorFlags& f) {
  f.lambda_given = cmd->count("--lambda") > 0;
  f.lambda_outcome_given = cmd->count("--lambda-outcome") > 0;
  f.cv_folds_given = cmd->count("--cv-folds") > 0;
  f.w1_given = cmd->count("--w1") > 0;
  f.family_given = cmd->count("--family") > 0;
  if ((f.lambda_given || f.lambda_outcome_given) && f.cv_folds_given) {
    throw cbal::ConfigError("--lambda/--lambda-outcome conflict with --cv-folds");
  }
  cbal::EstimatorConfig config;
  config.family = parse_family(f.family);
  config.w1 = parse_w1(f.w1);
  config.w2 = parse_w2(f.w2);
  config.level = f.level;
  config.penalty_ps = f.lambda_given
                          ? cbal::PenaltySpec::Fixed(f.lambda)
                          : cbal::PenaltySpec::Cv(f.cv_folds, f.seed);
  config.penalty_outcome =
      f.lambda_outcome_given
          ? cbal::PenaltySpec::Fixed(f.lambda_outcome)
          : cbal::PenaltySpec::Cv(f.cv_folds, cbal::derive_seed(f.seed, 1));
  config.validate();
  return config;
}

int run_estimate(const CLI::App* cmd, EstimatorFlags& flags,
                 const std::string& input, const std::string& output) {
  cbal::EstimatorConfig config = build_config(cmd, flags);
  const cbal::Dataset data = cbal::ingest_csv(input);
  // Configuration conflicts surface before any fitting.
  if (config.family.id != cbal::Family::Id::gaussian) {
    config.family.validate_outcome(data.Y);
  }
  const cbal::EffectEstimate est = cbal::estimate_ate(data, config);
  const std::string doc = cbal::effect_to_json(est);
  if (output.empty()) {
    std::cout << doc << "\n";
  } else {
    cbal::write_text_file(output, doc + "\n");
  }
  return 0;
}

int run_simulate(const CLI::App* cmd, EstimatorFlags& flags,
                 const cbal::ScenarioSpec& spec_in, const std::string& output,
                 int threads) {
  cbal::ScenarioSpec spec = spec_in;
  spec.master_seed = flags.seed;
  // Binomial smoke defaults: a binomial(8) outcome model with the
  // doubly-robust GLM weight pair, unless overridden.
  if (spec.outcome_kind == cbal::OutcomeKind::binomial_logistic) {
    if (!flags.family_given) flags.family = "binomial:8";
    if (!flags.w1_given) flags.w1 = "bpp";
  }
  const cbal::EstimatorConfig config = build_config(cmd, flags);
  const cbal::SimulationReport report = cbal::run_scenario(spec, config, threads);
  cbal::write_text_file(output + ".json", cbal::report_to_json(report) + "\n");
  cbal::write_text_file(output + ".csv", cbal::report_to_csv(report));
  std::cout << cbal::report_to_csv(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-balancing propensity score estimation of average treatment effects"};
  app.require_subcommand(1);

  EstimatorFlags est_flags;
  std::string input, est_output;
  CLI::App* est = app.add_subcommand("estimate", "Estimate the ATE from a CSV dataset");
  est->add_option("--input", input, "Input CSV (columns: covariates, T, Y)")->required();
  est->add_option("--output", est_output, "Output JSON path (stdout when omitted)");
  add_estimator_flags(est, est_flags);

  EstimatorFlags sim_flags;
  cbal::ScenarioSpec spec;
  std::string scenario_name = "both-correct";
  std::string outcome_kind = "linear";
  std::string sim_output = "simulation";
  int threads = 0;
  long long sim_n = 500, sim_d = 1000;
  CLI::App* sim = app.add_subcommand("simulate", "Run a Monte Carlo scenario study");
  sim->add_option("--scenario", scenario_name,
                  "both-correct, ps-misspecified, outcome-misspecified or both-misspecified");
  sim->add_option("--n", sim_n, "Sample size per replication");
  sim->add_option("--d", sim_d, "Generated covariate count (>= 10)");
  sim->add_option("--rho", spec.rho, "AR(1) correlation of the covariates");
  sim->add_option("--reps", spec.replications, "Replication count");
  sim->add_option("--outcome-kind", outcome_kind, "linear or binomial");
  sim->add_option("--output", sim_output, "Output stem; writes <stem>.json and <stem>.csv");
  sim->add_option("--threads", threads, "Worker threads (0 = hardware)");
  add_estimator_flags(sim, sim_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (est->parsed()) return run_estimate(est, est_flags, input, est_output);
    spec.scenario = parse_scenario(scenario_name);
    spec.n = static_cast<cbal::Index>(sim_n);
    spec.d = static_cast<cbal::Index>(sim_d);
    if (outcome_kind == "linear") {
      spec.outcome_kind = cbal::OutcomeKind::linear;
    } else if (outcome_kind == "binomial") {
      spec.outcome_kind = cbal::OutcomeKind::binomial_logistic;
    } else {
      throw cbal::ConfigError("unknown outcome kind '" + outcome_kind + "'");
    }
    return run_simulate(sim, sim_flags, spec, sim_output, threads);
  } catch (const cbal::Error& e) {
    std::cout << cbal::error_to_json(
                     typeid(e) == typeid(cbal::ParseError) ? "parse" : "error",
                     e.what())
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cout << cbal::error_to_json("error", e.what()) << "\n";
    return 1;
  }
}
