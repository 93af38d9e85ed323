#pragma once

// Command-line pipeline: run configuration, artifact layout and one entry
// point per subcommand. Every command reads its inputs from and writes its
// outputs to the configured output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "polsens/confound.hpp"
#include "polsens/dataset.hpp"
#include "polsens/glm.hpp"
#include "polsens/policy.hpp"
#include "polsens/rr.hpp"
#include "polsens/synthetic.hpp"

namespace polsens::cli {

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "polsens_out";

  std::optional<std::filesystem::path> scenario;  // ScenarioSpec JSON; built-in preset when absent
  std::optional<std::size_t> n;                   // overrides the scenario size
  std::optional<std::filesystem::path> data;      // observational CSV; <out>/data.csv when absent
  std::vector<std::string> keep;                  // covariates synth exposes; empty = all

  FoldFractions folds;
  std::size_t eval_count = 0;  // > 0 replaces the fractional split with a fixed evaluation fold
  CvOptions cv;

  PolicyMode policy_mode = PolicyMode::kQuantile;
  std::vector<double> thresholds;  // empty: default grid for the mode

  SensitivitySpec sensitivity;
  std::vector<std::size_t> sweep_k;
  std::vector<double> sweep_sigma_tau;
  std::vector<RRGrid> rr_regimes;  // empty: default regimes

  std::vector<std::vector<std::string>> censorings;  // validate; empty = default
  std::vector<double> quantile_grid;                 // rank-check; empty = 0, 0.05, ..., 1

  double rhat_gate = 1.1;  // <= 0 disables
  unsigned threads = 0;    // 0: no cap

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  // SHA-256 of the canonical JSON form, without the thread cap.
  std::string hash() const;

  std::vector<double> threshold_grid() const;
  std::vector<double> rank_grid() const;
  std::filesystem::path data_path() const;
  std::filesystem::path out(const std::string& file) const { return output_dir / file; }
};

// Artifact file names and the command that produces each.
namespace artifact {
inline constexpr const char* kTruth = "truth.csv";
inline constexpr const char* kData = "data.csv";
inline constexpr const char* kScenario = "scenario.json";
inline constexpr const char* kFolds = "folds.csv";
inline constexpr const char* kNuisance = "nuisance.csv";
inline constexpr const char* kScores = "scores.csv";
inline constexpr const char* kPolicies = "policies.csv";
inline constexpr const char* kDirect = "direct.csv";
inline constexpr const char* kSensitivity = "sensitivity.csv";
inline constexpr const char* kSensitivitySweep = "sensitivity_sweep.csv";
inline constexpr const char* kDiagnostics = "sensitivity_diagnostics.json";
inline constexpr const char* kCounterfactual = "counterfactual.bin";
inline constexpr const char* kEnvelope = "rr_envelope.csv";
inline constexpr const char* kSubgroups = "subgroups.csv";
inline constexpr const char* kRanking = "ranking.csv";
inline constexpr const char* kCoverage = "coverage.csv";
inline constexpr const char* kValidationSubgroups = "validation_subgroups.csv";
inline constexpr const char* kValidationSummary = "validation_summary.json";
inline constexpr const char* kReport = "report.csv";
inline constexpr const char* kReportSummary = "report.json";

std::string producer(const std::string& file);
}  // namespace artifact

struct CommandResult {
  std::vector<std::string> outputs;  // file names inside the output directory
  nlohmann::json summary = nlohmann::json::object();
};

CommandResult run_synth(const RunConfig& c);
CommandResult run_fit_nuisance(const RunConfig& c);
CommandResult run_policies(const RunConfig& c);
CommandResult run_evaluate_direct(const RunConfig& c);
CommandResult run_sensitivity(const RunConfig& c);
CommandResult run_rr_sweep(const RunConfig& c);
CommandResult run_subgroup(const RunConfig& c);
CommandResult run_rank_check(const RunConfig& c);
CommandResult run_validate(const RunConfig& c);
CommandResult run_report(const RunConfig& c);

const std::vector<std::string>& command_names();

// Dispatches by subcommand name and writes manifest_<command>.json on success.
CommandResult run_command(const std::string& command, const RunConfig& c);

// 0 success, 2 validation/config, 3 convergence gate, 4 I/O, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace polsens::cli
