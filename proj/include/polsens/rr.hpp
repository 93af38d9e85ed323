#pragma once

// Four-parameter sensitivity sweep with a binary unmeasured confounder u.
// u ~ Bernoulli(p) independent of x; u multiplies the odds of treatment by
// gamma and the odds of the outcome in arm t by delta_t. Per-unit intercepts
// are calibrated so the u-marginal probabilities reproduce the fitted
// nuisance predictions, and the missing potential outcome is imputed under
// Pr(u | x, t, y).

#include <cstddef>
#include <string>
#include <vector>

#include "polsens/dataset.hpp"
#include "polsens/glm.hpp"
#include "polsens/policy.hpp"

namespace polsens {

struct RRParams {
  double p = 0.5;
  double gamma = 1.0;
  double delta0 = 1.0;
  double delta1 = 1.0;

  void validate() const;
  bool operator==(const RRParams&) const = default;
};

struct RRGrid {
  std::vector<double> p_values, gamma_values, delta0_values, delta1_values;

  void validate() const;
  std::size_t size() const {
    return p_values.size() * gamma_values.size() * delta0_values.size() * delta1_values.size();
  }
};

// p in {0.1, ..., 0.9}; each multiplier on `points` log-spaced values in [1, cap].
RRGrid rr_regime_grid(double cap, std::size_t points = 5);
// Sorted union of two grids, so either input's envelope is contained in the result's.
RRGrid merge_grids(const RRGrid& a, const RRGrid& b);
// The default pair: double-odds, then double-odds merged with triple-odds.
std::vector<RRGrid> default_regimes();

// (1 - w) * logistic(c) + w * logistic(c + log_effect).
double mixture_probability(double intercept, double log_effect, double w);
// Intercept c solving mixture_probability(c, log_effect, w) = target. A target
// outside the clamp range is clamped and *flagged set.
double calibrate_intercept(double target, double log_effect, double w, bool* flagged = nullptr);

struct RRUnit {
  double assign_intercept = 0.0;
  double outcome_intercept[2] = {0.0, 0.0};
  double u_given_t[2] = {0.0, 0.0};  // Pr(u = 1 | x, T = t)
  double u_posterior = 0.0;          // Pr(u = 1 | x, t_i, y_i)
  double imputed = 0.0;              // missing-arm outcome probability
  bool flagged = false;
};

RRUnit rr_calibrate_unit(double e_hat, double mu0_hat, double mu1_hat, int t, int y,
                         const RRParams& params);

struct RRImputation {
  std::vector<double> imputed;  // dataset order
  std::size_t flagged = 0;
};

RRImputation rr_impute(const Dataset& d, const NuisanceEstimates& nz, const RRParams& params);

double rr_adjusted_value(const Dataset& d, const NuisanceEstimates& nz, const Policy& pi,
                         const RRParams& params);

struct RREnvelope {
  double min = 0.0, max = 0.0;
  RRParams argmin, argmax;
  std::size_t flagged_units = 0;  // largest per-point flag count seen
};

// Exhaustive sweep over the Cartesian grid; one envelope per policy.
// threads = 0 uses hardware concurrency.
std::vector<RREnvelope> rr_sweep(const Dataset& d, const NuisanceEstimates& nz,
                                 const std::vector<Policy>& policies, const RRGrid& grid,
                                 unsigned threads = 0);

// Columns (threshold, release_rate, direct_value, rr_min, rr_max, regime).
ResultsTable rr_envelope_table(const std::vector<Policy>& family,
                               const std::vector<PolicyValueEstimate>& direct,
                               const std::vector<RREnvelope>& envelopes, const std::string& regime);

}  // namespace polsens
