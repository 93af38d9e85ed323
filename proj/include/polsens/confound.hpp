#pragma once

// Bayesian model of a single latent per-unit confounder. Units are grouped
// into K risk bins by predicted untreated risk; within each bin three
// logistic equations (untreated outcome, treated outcome, assignment) are
// linear in one nuisance prediction and the latent u_i. Coefficients follow
// random-walk priors across bins; the u-loadings are kept positive.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polsens/dataset.hpp"
#include "polsens/glm.hpp"
#include "polsens/mcmc.hpp"
#include "polsens/policy.hpp"

namespace polsens {

struct BinAssignment {
  std::size_t K = 1;
  std::vector<std::size_t> group;  // 0-based bin per unit, dataset order
  std::vector<std::size_t> sizes;
};

// Ranks units by (score, id) and cuts K contiguous blocks; the first n mod K
// blocks get one extra unit.
BinAssignment bin_by_risk(std::span<const double> score, std::span<const UnitId> ids,
                          std::size_t K);

// Coefficient chains, each of length K.
enum Chain : std::size_t {
  kUntreatedIntercept,
  kUntreatedSlope,
  kUntreatedLoading,
  kTreatedIntercept,
  kTreatedSlope,
  kTreatedLoading,
  kAssignIntercept,
  kAssignSlope,
  kAssignLoading,
  kChainCount
};

constexpr bool is_loading(std::size_t c) {
  return c == kUntreatedLoading || c == kTreatedLoading || c == kAssignLoading;
}

const char* chain_name(std::size_t c);

// Sampler coordinates for the coefficient chains. Non-centred chains are
// sampled as independent standard normals pushed through the random-walk
// construction (an inverse-CDF step for the positive chains); the prior on the
// natural-scale values is the same either way.
enum class ChainCoordinates { kCentered, kLoadingsNonCentered, kNonCentered };

struct SensitivitySpec {
  std::size_t K = 10;
  double sigma_tau = 1.0;
  ChainCoordinates coordinates = ChainCoordinates::kNonCentered;
  SamplerConfig sampler;
  // Test hook: loadings enter the likelihood as 0 (ignorable model).
  bool pin_loadings = false;
};

// Natural-scale parameters.
struct ConfoundParams {
  std::array<std::vector<double>, kChainCount> coef;  // loadings > 0
  std::array<double, kChainCount> tau{};              // > 0
  std::vector<double> u;                              // dataset order
};

// Log density of an unconstrained random walk: x1 ~ N(0,1),
// x_j ~ N(x_{j-1}, tau^2). Gradients are accumulated when non-null.
double random_walk_lpdf(std::span<const double> x, double tau, std::span<double> grad_x,
                        double* grad_tau);
// Positive random walk: x1 ~ N+(0,1), x_j ~ N(x_{j-1}, tau^2) truncated to
// x_j > 0, normalising constants included.
double positive_random_walk_lpdf(std::span<const double> x, double tau, std::span<double> grad_x,
                                 double* grad_tau);

// Standard-normal coordinates v to a positive random walk and back. The
// forward map also reports log |det dx/dv| when asked.
std::vector<double> positive_walk_from_normals(std::span<const double> v, double tau,
                                               double* log_jacobian = nullptr);
std::vector<double> positive_walk_to_normals(std::span<const double> x, double tau);

class ConfoundModel {
 public:
  ConfoundModel(const Dataset& d, const NuisanceEstimates& nz, BinAssignment bins,
                const SensitivitySpec& spec);

  std::size_t n() const { return n_; }
  std::size_t K() const { return bins_.K; }
  std::size_t dimension() const { return u_offset() + n_; }
  std::size_t chain_offset(std::size_t c) const { return c * bins_.K; }
  std::size_t tau_offset() const { return kChainCount * bins_.K; }
  std::size_t u_offset() const { return tau_offset() + kChainCount; }
  const BinAssignment& bins() const { return bins_; }
  // Slot of dataset row `row` inside the latent block.
  std::size_t u_slot(std::size_t row) const { return slot_of_row_[row]; }
  bool noncentered(std::size_t chain) const;

  double log_likelihood(std::span<const double> q, std::span<double> grad) const;
  double log_prior(std::span<const double> q, std::span<double> grad) const;
  // Zeroes grad, then adds both parts.
  double log_posterior(std::span<const double> q, std::span<double> grad) const;

  LogDensityModel density() const;
  std::vector<std::string> parameter_names() const;

  ConfoundParams unpack(std::span<const double> q) const;
  std::vector<double> pack(const ConfoundParams& p) const;

  // Probability of the unobserved potential outcome for each dataset row.
  void counterfactual(std::span<const double> q, std::span<double> out) const;

 private:
  struct Range {
    std::size_t begin, end;
  };

  // Natural-scale chain values, index c * K + k.
  void decode(std::span<const double> q, std::vector<double>& coef) const;
  // grad += (d coef / d q)^T g_coef.
  void pull_back(std::span<const double> q, std::span<const double> coef, std::span<const double> g_coef,
                 std::span<double> grad) const;

  std::size_t n_;
  BinAssignment bins_;
  double sigma_tau_;
  ChainCoordinates coordinates_;
  bool pin_loadings_;
  std::vector<UnitId> ids_;
  // Slot-ordered copies: bins ascending, untreated before treated.
  std::vector<double> t_, y_, mu0_, mu1_, e_;
  std::vector<std::size_t> slot_of_row_, row_of_slot_;
  std::vector<Range> untreated_, treated_;
};

// Per-draw counterfactual probabilities, dataset row order.
class CounterfactualDraws {
 public:
  CounterfactualDraws(std::vector<UnitId> ids, std::vector<double> treatment,
                      std::vector<double> outcome, std::size_t draws, std::vector<double> values);
  static CounterfactualDraws from_posterior(const ConfoundModel& model, const Dataset& d,
                                            const PosteriorDraws& draws);

  std::size_t draws() const { return draws_; }
  std::size_t size() const { return ids_.size(); }
  std::span<const UnitId> ids() const { return ids_; }
  double value(std::size_t draw, std::size_t row) const { return values_[draw * ids_.size() + row]; }

  std::vector<double> policy_value(const Policy& pi) const;
  std::vector<double> subgroup_ate(std::span<const std::uint8_t> in_group) const;

 private:
  std::vector<UnitId> ids_;
  std::vector<double> t_, y_;
  std::size_t draws_;
  std::vector<double> values_;
};

struct SensitivityFit {
  PosteriorDraws draws;
  BinAssignment bins;
  bool rhat_flag = false;   // some R-hat above 1.1
  bool rhat_clean = false;  // every R-hat at most 1.05
  double max_rhat = 0.0;
};

SensitivityFit fit_sensitivity(const Dataset& d, const NuisanceEstimates& nz,
                               const SensitivitySpec& spec);

// Convenience wrappers over CounterfactualDraws.
std::vector<double> posterior_policy_value(const SensitivityFit& fit, const Dataset& d,
                                           const NuisanceEstimates& nz, const SensitivitySpec& spec,
                                           const Policy& pi);

struct BandSummary {
  double q025 = 0, q25 = 0, q50 = 0, q75 = 0, q975 = 0;
  double mean = 0, sd = 0;
};

// Linear-interpolation quantile of a sample (copied and sorted).
double sample_quantile(std::vector<double> x, double p);
BandSummary summarize(std::span<const double> x);

// Columns (threshold, release_rate, q025, q25, q50, q75, q975).
ResultsTable sensitivity_curve_table(const std::vector<Policy>& family,
                                     const std::vector<BandSummary>& bands);

}  // namespace polsens
