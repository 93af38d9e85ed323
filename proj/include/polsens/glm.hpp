#pragma once

// L1-regularised logistic regression by cyclic coordinate descent.
//
// Features are standardised internally (population sd) and the intercept
// is unpenalised. The solver minimises
//
//   F(b0, beta) = (1/n) sum_i [log(1 + exp(eta_i)) - y_i eta_i]
//                 + lambda * sum_j |beta_j|
//
// on the standardised scale. Each coordinate takes a proximal Newton step
// followed by an Armijo backtracking search, so F never increases.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "polsens/dataset.hpp"

namespace polsens {

enum class Target { kTreatment, kOutcome };

inline constexpr double kProbabilityClamp = 1e-6;

struct GlmFit {
  std::vector<std::string> schema;
  double intercept = 0.0;
  std::vector<double> coefficients;  // original covariate scale
  double lambda = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_sd;
  bool converged = false;
  double objective = 0.0;  // penalised NLL per observation at the solution
  int sweeps = 0;
};

struct LassoOptions {
  double tolerance = 1e-8;  // max |coefficient update| over a sweep
  int max_sweeps = 10000;
};

// Standardised design for a subset of rows and one binary target.
class LogisticDesign {
 public:
  LogisticDesign(const Dataset& d, Target target, std::span<const std::size_t> rows);

  std::size_t n() const { return y_.size(); }
  std::size_t p() const { return columns_.size(); }
  std::span<const double> column(std::size_t j) const { return columns_[j]; }
  std::span<const double> ones() const { return ones_; }
  std::span<const double> y() const { return y_; }
  // Zero-variance features never enter the model.
  bool constant(std::size_t j) const { return sd_[j] == 0.0; }
  double mean(std::size_t j) const { return mean_[j]; }
  double sd(std::size_t j) const { return sd_[j]; }
  double positive_rate() const { return positive_rate_; }
  const std::vector<std::string>& schema() const { return schema_; }

 private:
  std::vector<std::string> schema_;
  std::vector<std::vector<double>> columns_;
  std::vector<double> ones_;
  std::vector<double> y_;
  std::vector<double> mean_;
  std::vector<double> sd_;
  double positive_rate_ = 0.0;
};

// Coefficients on the standardised scale.
struct LassoState {
  double intercept = 0.0;
  std::vector<double> beta;
};

struct LassoResult {
  LassoState state;
  bool converged = false;
  int sweeps = 0;
  double objective = 0.0;
};

using SweepCallback = std::function<void(int sweep, double objective)>;

LassoResult solve_lasso(const LogisticDesign& design, double lambda,
                        const LassoState* warm_start = nullptr,
                        const LassoOptions& options = {},
                        const SweepCallback& on_sweep = {});

double penalized_objective(const LogisticDesign& design, const LassoState& s,
                           double lambda);
// Gradient of the unpenalised mean loss: [d/db0, d/dbeta_1, ...].
std::vector<double> loss_gradient(const LogisticDesign& design, const LassoState& s);
// Largest violation of the lasso optimality conditions.
double kkt_residual(const LogisticDesign& design, const LassoState& s, double lambda);
// Smallest lambda at which every slope is zero.
double lambda_max(const LogisticDesign& design);
// `count` log-spaced values from lambda_max down to lambda_max * ratio.
std::vector<double> lambda_path(double lambda_max, std::size_t count = 50,
                                double ratio = 1e-4);

GlmFit to_fit(const LogisticDesign& design, const LassoResult& result, double lambda);

GlmFit fit_lasso_logit(const Dataset& d, Target target,
                       std::span<const std::size_t> rows, double lambda,
                       const LassoOptions& options = {});

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  std::vector<double> lambda_grid;  // empty: lambda_path(lambda_max)
  LassoOptions lasso;
};

struct CvResult {
  std::vector<double> lambdas;  // descending
  std::vector<double> mean_loss;
  std::vector<double> se_loss;
  std::size_t min_index = 0;
  std::size_t one_se_index = 0;  // largest lambda within one SE of the minimum
};

CvResult cross_validate(const Dataset& d, Target target,
                        std::span<const std::size_t> rows, const CvOptions& options);

// Cross-validated fit using the one-standard-error rule.
GlmFit fit_lasso_logit_cv(const Dataset& d, Target target,
                          std::span<const std::size_t> rows,
                          const CvOptions& options, CvResult* report = nullptr);

// Clamped to [kProbabilityClamp, 1 - kProbabilityClamp].
std::vector<double> predict(const GlmFit& fit, const Dataset& d);
std::vector<double> predict_rows(const GlmFit& fit, const Dataset& d,
                                 std::span<const std::size_t> rows);

double mean_log_loss(std::span<const double> prob, std::span<const double> y);

struct NuisanceEstimates {
  std::vector<UnitId> ids;  // target dataset order
  std::vector<double> mu0_hat;
  std::vector<double> mu1_hat;
  std::vector<double> e_hat;
  GlmFit mu0_fit;
  GlmFit mu1_fit;
  GlmFit e_fit;

  std::size_t size() const { return ids.size(); }
};

// mu0 from untreated fold units, mu1 from treated fold units, e from all fold
// units; each lambda chosen by CV. Predictions are for `target`.
NuisanceEstimates fit_nuisance(const Dataset& d, std::span<const UnitId> fold,
                               const Dataset& target, const CvOptions& options);

NuisanceEstimates predict_nuisance(const GlmFit& mu0, const GlmFit& mu1,
                                   const GlmFit& e, const Dataset& target);

// Throws AlignmentError unless `nz` lists exactly the ids of `d` in order.
void check_aligned(const Dataset& d, const NuisanceEstimates& nz);

// Columns (id, mu0_hat, mu1_hat, e_hat).
ResultsTable nuisance_table(const NuisanceEstimates& nz);

}  // namespace polsens
