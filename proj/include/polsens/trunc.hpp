#pragma once

// Right-truncated normal moments, the ranking-preservation checks built on
// them, and the learned-versus-oracle ranking experiment.

#include <boost/rational.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polsens/dataset.hpp"
#include "polsens/glm.hpp"
#include "polsens/synthetic.hpp"

namespace polsens {

// R ~ N(theta, sigma^2) conditioned on R < s.
struct TruncatedNormal {
  double theta = 0.0;
  double sigma = 1.0;
  double s = 0.0;

  void validate() const;  // DomainError unless sigma > 0 and all finite
  double beta() const { return (s - theta) / sigma; }
};

// phi(b) / Phi(b); continued fraction below b = -8 where the direct ratio underflows.
double inverse_mills_ratio(double b);

double truncated_mean(const TruncatedNormal& tn);
double truncated_var(const TruncatedNormal& tn);

struct MonotonicityReport {
  bool increasing = true;
  bool derivative_matches = true;
  double max_relative_error = 0.0;  // |fd - var/sigma^2| / (var/sigma^2), worst over the grid
  std::optional<double> offending_theta;
  std::string message;

  bool ok() const { return increasing && derivative_matches; }
};

// Strictly increasing truncated mean over the grid, and central-difference
// d/dtheta equal to var/sigma^2 within rel_tol.
MonotonicityReport check_monotonicity(double sigma, double s, std::span<const double> theta_grid,
                                      double fd_step = 1e-6, double rel_tol = 1e-6);

// Two groups with different spreads: does ordering by truncated mean
// disagree with ordering by underlying mean?
struct OrderingReport {
  double mean_a = 0.0, mean_b = 0.0;
  bool inverted = false;
  std::string message;
};
OrderingReport compare_group_ordering(const TruncatedNormal& a, const TruncatedNormal& b);

// Groups (low mean, small spread) and (higher mean, large spread) that invert under truncation at 0.
std::pair<TruncatedNormal, TruncatedNormal> unequal_variance_counterexample();

// Stratified population with an unobserved stratum label, in exact arithmetic.
using Rational = boost::rational<long long>;

struct PopulationCell {
  std::string observed;    // stratum visible to the analyst
  std::string hidden;      // visible only to the decision maker
  Rational share;
  int treated = 0;
  Rational untreated_risk;
};

// Young/old by man/woman; only young men are detained.
std::vector<PopulationCell> inverted_ranking_population();

struct StratumRisk {
  std::string observed;
  Rational true_risk;                    // share-weighted over all cells
  std::optional<Rational> learned_risk;  // over untreated cells only; empty if none
};

std::vector<StratumRisk> stratum_risks(std::span<const PopulationCell> cells);

// Units drawn in exact proportion to `share` (total `n`), with y0 realised at
// the exact cell rate and y1 = 0. Covariate "old" is 0/1; the hidden label is dropped.
SyntheticTruth population_truth(std::span<const PopulationCell> cells, std::size_t n);

struct RankingCurve {
  std::vector<double> quantile, release_rate, learned_value, oracle_value;
  std::vector<double> learned_scores, oracle_scores;  // per unit, truth order

  double max_gap() const;
};

// Learned: risk model fit on released units of the censored view. Oracle: same
// covariates, fit on every unit against y0. Both rank all units and are scored
// by the true value of each quantile policy.
RankingCurve ranking_robustness(const SyntheticTruth& truth, std::span<const std::string> keep,
                                std::span<const double> quantile_grid, const CvOptions& cv = {});

// Columns (quantile, release_rate, learned_value, oracle_value).
ResultsTable ranking_table(const RankingCurve& curve);

}  // namespace polsens
