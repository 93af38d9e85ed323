#pragma once

// Synthetic potential-outcome populations with known ground truth, covariate
// censoring to induce confounding, and the end-to-end validation run that
// scores sensitivity bands against oracle policy values.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polsens/confound.hpp"
#include "polsens/dataset.hpp"
#include "polsens/glm.hpp"
#include "polsens/policy.hpp"
#include "polsens/rr.hpp"

namespace polsens {

struct LogitPreset {
  double intercept = 0.0;
  double age = 0.0;        // per year above the age centre
  double male = 0.0;
  double prior_fta = 0.0;  // per prior missed appearance
  std::vector<double> extra;  // one per extra case feature (missing entries are 0)
};

struct ScenarioSpec {
  std::size_t n = 50000;

  // Age: mixture of normals, rounded and clipped.
  std::vector<double> age_weights{0.55, 0.45};
  std::vector<double> age_means{26.0, 40.0};
  std::vector<double> age_sds{4.5, 11.0};
  double age_min = 18.0, age_max = 80.0, age_center = 30.0;

  double male_rate = 0.75;
  // Prior failures to appear: negative binomial, capped.
  double prior_fta_dispersion = 0.8;
  double prior_fta_mean = 0.9;
  double prior_fta_cap = 12.0;

  // Further standard-normal case characteristics (case_1, ...). They are in
  // the full schema but no default censoring keeps them, so every censored
  // view is confounded.
  std::size_t extra_features = 2;

  LogitPreset untreated_outcome, treated_outcome, assignment;

  // Intercepts are re-solved so the expected marginals hit these when `calibrate` is set.
  double release_rate = 0.69;
  double fta_released = 0.15;
  double fta_detained = 0.09;
  bool calibrate = true;

  void validate() const;
  std::vector<std::string> schema() const;

  static ScenarioSpec paper_default();
  static ScenarioSpec from_json(const std::string& text);
  static ScenarioSpec load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct GeneratorProbs {
  std::vector<double> mu0, mu1, e;
};

struct SyntheticTruth {
  Dataset base;  // full covariates; treatment = t, outcome = y_t
  std::vector<double> y0, y1;
  GeneratorProbs probs;
  std::uint64_t seed = 0;

  std::size_t size() const { return base.size(); }
  std::span<const double> treatment() const { return base.treatment(); }
};

SyntheticTruth generate_truth(const ScenarioSpec& spec, std::uint64_t seed);
// Draws (t, y0, y1) from given per-unit probabilities over given covariates.
// t, y0, y1 use separate random streams.
SyntheticTruth truth_from_probabilities(std::vector<std::string> schema, std::vector<UnitId> ids,
                                        std::vector<std::vector<double>> covariates,
                                        GeneratorProbs probs, std::uint64_t seed);

// Observational view restricted to `keep` covariates, in the given order.
Dataset censor(const SyntheticTruth& truth, std::span<const std::string> keep);

// Potential outcomes of the given ids, in that order.
void potential_outcomes(const SyntheticTruth& truth, std::span<const UnitId> ids,
                        std::vector<double>& y0, std::vector<double>& y1);

// CSV: id, covariates..., t, y0, y1.
void write_truth(const SyntheticTruth& truth, const std::filesystem::path& path);
SyntheticTruth read_truth(const std::filesystem::path& path);

// The three nested censorings used for validation.
std::vector<std::vector<std::string>> default_censorings();

struct Subgroup {
  std::string name;
  std::vector<std::uint8_t> mask;  // over the rows it was built for
};
// Age bands, gender and prior-FTA bands, defined on full covariates.
std::vector<Subgroup> default_subgroups(const Dataset& full);

struct ValidationOptions {
  std::size_t eval_count = 2000;
  std::uint64_t seed = 1;
  // Quantile mode: cutoffs are release fractions. Absolute mode: score thresholds.
  PolicyMode policy_mode = PolicyMode::kQuantile;
  std::vector<double> thresholds;  // empty: default grid for the mode
  CvOptions cv;
  SensitivitySpec sensitivity;
  std::vector<RRGrid> rr_regimes;  // empty: default_regimes()
  bool subgroups = true;
  unsigned threads = 0;  // censorings in parallel; 0 = hardware concurrency
};

// Quantile mode: 15 release fractions 0, 1/14, ..., 1. Absolute mode: 0.03, 0.06, ..., 0.45.
std::vector<double> default_threshold_grid(PolicyMode mode = PolicyMode::kQuantile);

struct ThresholdRow {
  double threshold = 0, release_rate = 0;
  double oracle = 0, direct = 0;
  BandSummary band;
  bool covered = false;  // 95% band contains the oracle value
  std::vector<RREnvelope> rr;  // one per regime
};

struct SubgroupRow {
  std::string group;
  std::size_t size = 0;
  double oracle = 0, direct = 0;
  BandSummary band;
  bool covered = false;
};

struct CensoringReport {
  std::vector<std::string> keep;
  std::string label;
  std::vector<ThresholdRow> thresholds;
  std::vector<SubgroupRow> subgroups;
  double max_rhat = 0;
  bool rhat_flag = false;
  std::size_t divergences = 0;

  double coverage() const;
  double mean_band_width() const;
};

struct ValidationReport {
  std::vector<CensoringReport> censorings;
  double subgroup_coverage() const;
};

ValidationReport run_validation_suite(const SyntheticTruth& truth,
                                      const std::vector<std::vector<std::string>>& censorings,
                                      const ValidationOptions& options);

// Columns (censoring, threshold, release_rate, oracle_value, direct_value,
// q025, q25, q50, q75, q975, covered, band_width, rr_min_<k>, rr_max_<k>...).
ResultsTable coverage_table(const ValidationReport& report);
// Columns (censoring, group, size, oracle_ate, direct_ate, q025, q50, q975, covered).
ResultsTable subgroup_table(const ValidationReport& report);

}  // namespace polsens
