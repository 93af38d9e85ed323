#include <CLI11.hpp>
#include <iostream>

#include "pipeline.hpp"

using polsens::cli::RunConfig;

int main(int argc, char** argv) {
  CLI::App app{"Policy evaluation under unmeasured confounding: synthetic data, nuisance fits, "
               "sensitivity bands, odds-ratio sweeps and validation."};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir, scenario, data, policy_mode, coordinates;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::size_t n = 0, eval_count = 0, K = 0, chains = 0, warmup = 0, draws = 0, cv_folds = 0;
  double sigma_tau = 0, rhat_gate = 0;
  std::vector<std::string> keep;
  std::vector<double> thresholds, quantiles;
  bool print_config = false;

  app.add_option("-c,--config", config_path, "JSON run configuration; flags override its fields")->check(CLI::ExistingFile);
  auto* o_out = app.add_option("-o,--out", out_dir, "Output directory for all artifacts");
  auto* o_seed = app.add_option("--seed", seed, "Seed for generation, folds, CV and sampling");
  auto* o_threads = app.add_option("--threads", threads, "Cap on worker threads (0 = no cap)");
  auto* o_scenario = app.add_option("--scenario", scenario, "Scenario JSON for synth");
  auto* o_n = app.add_option("--n", n, "Number of synthetic units");
  auto* o_data = app.add_option("--data", data, "Observational dataset CSV (id,treatment,outcome,covariates...)");
  auto* o_keep = app.add_option("--keep", keep, "Covariates exposed by synth / used by rank-check")->delimiter(',');
  auto* o_eval = app.add_option("--eval-count", eval_count, "Fixed evaluation fold size");
  auto* o_cvf = app.add_option("--cv-folds", cv_folds, "Cross-validation folds");
  auto* o_mode = app.add_option("--policy-mode", policy_mode, "quantile (release fractions) or absolute (risk cutoffs)")
                     ->check(CLI::IsMember({"quantile", "absolute"}));
  auto* o_thr = app.add_option("--thresholds", thresholds, "Policy grid")->delimiter(',');
  auto* o_K = app.add_option("--K", K, "Risk bins for the confounding model");
  auto* o_tau = app.add_option("--sigma-tau", sigma_tau, "Prior scale of the random-walk step sizes");
  auto* o_coord = app.add_option("--coordinates", coordinates, "Sampler coordinates")
                      ->check(CLI::IsMember({"centered", "loadings_noncentered", "noncentered"}));
  auto* o_chains = app.add_option("--chains", chains, "Sampler chains");
  auto* o_warm = app.add_option("--warmup", warmup, "Warmup iterations per chain");
  auto* o_draws = app.add_option("--draws", draws, "Kept draws per chain");
  auto* o_gate = app.add_option("--rhat-gate", rhat_gate, "Fail with exit 3 when max R-hat exceeds this (<= 0 disables)");
  auto* o_q = app.add_option("--quantiles", quantiles, "Release fractions for rank-check")->delimiter(',');
  app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  const std::map<std::string, std::string> help{
      {"synth", "Generate a synthetic truth and its observational view"},
      {"fit-nuisance", "Split folds and fit outcome and propensity models"},
      {"policies", "Fit the policy-fold risk model and build the policy grid"},
      {"evaluate-direct", "Direct (outcome-model) policy values"},
      {"sensitivity", "Posterior policy-value bands under the confounding model"},
      {"rr-sweep", "Odds-ratio sensitivity envelopes"},
      {"subgroup", "Subgroup treatment effects with posterior intervals"},
      {"rank-check", "Learned vs oracle ranking policies"},
      {"validate", "Coverage of sensitivity bands across covariate censorings"},
      {"report", "Concatenate artifacts and diagnostics"},
  };
  std::vector<std::size_t> sweep_k;
  std::vector<double> sweep_tau;
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : polsens::cli::command_names()) {
    subs[name] = app.add_subcommand(name, help.at(name));
  }
  subs["sensitivity"]->add_option("--sweep-k", sweep_k, "Refit over these K values")->delimiter(',');
  subs["sensitivity"]->add_option("--sweep-sigma-tau", sweep_tau, "Refit over these sigma_tau values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (*o_out) c.output_dir = out_dir;
    if (*o_seed) c.seed = seed;
    if (*o_threads) c.threads = threads;
    if (*o_scenario) c.scenario = scenario;
    if (*o_n) c.n = n;
    if (*o_data) c.data = data;
    if (*o_keep) c.keep = keep;
    if (*o_eval) c.eval_count = eval_count;
    if (*o_cvf) c.cv.folds = cv_folds;
    if (*o_mode) c.policy_mode = policy_mode == "absolute" ? polsens::PolicyMode::kAbsolute : polsens::PolicyMode::kQuantile;
    if (*o_thr) c.thresholds = thresholds;
    if (*o_K) c.sensitivity.K = K;
    if (*o_tau) c.sensitivity.sigma_tau = sigma_tau;
    if (*o_coord) {
      auto j = c.to_json();
      j["sensitivity"]["coordinates"] = coordinates;
      c.sensitivity.coordinates = RunConfig::from_json(j).sensitivity.coordinates;
    }
    if (*o_chains) c.sensitivity.sampler.chains = chains;
    if (*o_warm) c.sensitivity.sampler.warmup = warmup;
    if (*o_draws) c.sensitivity.sampler.draws = draws;
    if (*o_gate) c.rhat_gate = rhat_gate;
    if (*o_q) c.quantile_grid = quantiles;
    if (!sweep_k.empty()) c.sweep_k = sweep_k;
    if (!sweep_tau.empty()) c.sweep_sigma_tau = sweep_tau;

    if (print_config) {
      std::cout << c.to_json().dump(2) << "\n";
      return 0;
    }
    std::string command;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) command = name;
    }
    const auto res = polsens::cli::run_command(command, c);
    for (const auto& f : res.outputs) std::cout << (c.output_dir / f).string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return polsens::cli::exit_code_for(e);
  }
}
