#include "polsens/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "polsens/errors.hpp"
#include "polsens/kernels.hpp"

namespace polsens {
namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

std::vector<double> linear_predictor(const LogisticDesign& design, const LassoState& s) {
  std::vector<double> eta(design.n(), s.intercept);
  for (std::size_t j = 0; j < design.p(); ++j) {
    if (s.beta[j] != 0.0) kernels::axpy(s.beta[j], design.column(j), eta);
  }
  return eta;
}

double mean_loss(const LogisticDesign& design, std::span<const double> eta) {
  if (design.n() == 0) return 0.0;
  return kernels::logit_loss_shifted(eta, design.ones(), 0.0, design.y()) /
         static_cast<double>(design.n());
}

double l1_norm(const std::vector<double>& beta) {
  double s = 0.0;
  for (double b : beta) s += std::abs(b);
  return s;
}

void require_both_classes(std::span<const double> y, const std::string& what) {
  const double pos = std::accumulate(y.begin(), y.end(), 0.0);
  if (y.empty()) throw InsufficientDataError(what + ": empty subset");
  if (pos == 0.0 || pos == static_cast<double>(y.size())) {
    throw DegenerateTargetError(what + ": target has a single class on the subset");
  }
}

std::span<const double> target_column(const Dataset& d, Target target) {
  return target == Target::kTreatment ? d.treatment() : d.outcome();
}

const char* target_name(Target t) {
  return t == Target::kTreatment ? "treatment" : "outcome";
}

}  // namespace

LogisticDesign::LogisticDesign(const Dataset& d, Target target,
                               std::span<const std::size_t> rows)
    : schema_(d.schema()) {
  const std::size_t n = rows.size();
  const auto ycol = target_column(d, target);
  y_.reserve(n);
  for (std::size_t r : rows) y_.push_back(ycol[r]);
  ones_.assign(n, 1.0);
  positive_rate_ = n ? std::accumulate(y_.begin(), y_.end(), 0.0) / n : 0.0;
  columns_.resize(d.width());
  mean_.assign(d.width(), 0.0);
  sd_.assign(d.width(), 0.0);
  for (std::size_t j = 0; j < d.width(); ++j) {
    const auto src = d.column(j);
    auto& col = columns_[j];
    col.reserve(n);
    for (std::size_t r : rows) col.push_back(src[r]);
    if (n == 0) continue;
    const double m = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : col) ss += (v - m) * (v - m);
    double sd = std::sqrt(ss / n);
    if (sd <= 1e-12 * (1.0 + std::abs(m))) sd = 0.0;
    mean_[j] = m;
    sd_[j] = sd;
    for (double& v : col) v = sd > 0.0 ? (v - m) / sd : 0.0;
  }
}

double penalized_objective(const LogisticDesign& design, const LassoState& s,
                           double lambda) {
  const auto eta = linear_predictor(design, s);
  return mean_loss(design, eta) + lambda * l1_norm(s.beta);
}

std::vector<double> loss_gradient(const LogisticDesign& design, const LassoState& s) {
  const auto eta = linear_predictor(design, s);
  const double inv_n = 1.0 / static_cast<double>(design.n());
  std::vector<double> g(design.p() + 1);
  g[0] = kernels::logit_coord(design.ones(), eta, design.y()).gradient * inv_n;
  for (std::size_t j = 0; j < design.p(); ++j) {
    g[j + 1] = kernels::logit_coord(design.column(j), eta, design.y()).gradient * inv_n;
  }
  return g;
}

double kkt_residual(const LogisticDesign& design, const LassoState& s, double lambda) {
  const auto g = loss_gradient(design, s);
  double worst = std::abs(g[0]);
  for (std::size_t j = 0; j < design.p(); ++j) {
    if (design.constant(j)) continue;
    const double gj = g[j + 1];
    const double b = s.beta[j];
    const double v = b != 0.0 ? std::abs(gj + lambda * (b > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(gj) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

double lambda_max(const LogisticDesign& design) {
  const double ybar = design.positive_rate();
  double lmax = 0.0;
  const double inv_n = 1.0 / static_cast<double>(design.n());
  for (std::size_t j = 0; j < design.p(); ++j) {
    if (design.constant(j)) continue;
    const auto z = design.column(j);
    double g = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) g += z[i] * (design.y()[i] - ybar);
    lmax = std::max(lmax, std::abs(g) * inv_n);
  }
  return lmax;
}

std::vector<double> lambda_path(double lmax, std::size_t count, double ratio) {
  if (count == 0) throw DomainError("lambda path needs at least one value");
  if (!(lmax > 0.0)) return std::vector<double>(1, 0.0);
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lmax;
    return out;
  }
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) out[k] = lmax * std::exp(step * static_cast<double>(k));
  return out;
}

LassoResult solve_lasso(const LogisticDesign& design, double lambda,
                        const LassoState* warm_start, const LassoOptions& options,
                        const SweepCallback& on_sweep) {
  if (lambda < 0.0 || !std::isfinite(lambda)) throw DomainError("lambda must be nonnegative");
  require_both_classes(design.y(), "lasso fit");
  const std::size_t p = design.p();
  const double inv_n = 1.0 / static_cast<double>(design.n());

  LassoResult res;
  if (warm_start != nullptr) {
    res.state = *warm_start;
  } else {
    res.state.intercept = logit(design.positive_rate());
    res.state.beta.assign(p, 0.0);
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (design.constant(j)) res.state.beta[j] = 0.0;
  }

  std::vector<double> eta = linear_predictor(design, res.state);
  double loss = mean_loss(design, eta);
  // Running objective, advanced by each accepted (non-positive) change.
  double objective = loss + lambda * l1_norm(res.state.beta);
  constexpr double kArmijo = 0.01;
  std::vector<double> saved_eta;

  // Coordinate index p denotes the intercept.
  auto update = [&](std::size_t c) -> double {
    const bool is_intercept = c == p;
    const auto x = is_intercept ? design.ones() : design.column(c);
    const double pen = is_intercept ? 0.0 : lambda;
    double& b = is_intercept ? res.state.intercept : res.state.beta[c];

    const auto stats = kernels::logit_coord(x, eta, design.y());
    const double g = stats.gradient * inv_n;
    const double h = std::max(stats.curvature * inv_n, 1e-12);
    const double d = soft_threshold(b - g / h, pen / h) - b;
    if (d == 0.0) return 0.0;
    const double predicted = g * d + pen * (std::abs(b + d) - std::abs(b));
    const double current = loss + pen * std::abs(b);
    double step = 1.0;
    if (std::abs(predicted) < 1e-11 * (1.0 + std::abs(current))) {
      // Loss values cannot resolve a decrease this small. Convexity lets the
      // one-sided slope at the trial point certify descent instead.
      saved_eta.assign(eta.begin(), eta.end());
      for (int k = 0; k < 30; ++k, step *= 0.5) {
        const double sd = step * d;
        kernels::axpy(sd, x, eta);
        const double g_new = kernels::logit_coord(x, eta, design.y()).gradient * inv_n;
        const double sign = (b + sd != 0.0) ? (b + sd > 0 ? 1.0 : -1.0) : (b > 0 ? 1.0 : -1.0);
        if ((g_new + pen * sign) * sd <= 0.0) {
          const double dl = g * sd + 0.5 * h * sd * sd;
          objective += std::min(0.0, dl + pen * (std::abs(b + sd) - std::abs(b)));
          loss += dl;
          b += sd;
          return std::abs(sd);
        }
        std::copy(saved_eta.begin(), saved_eta.end(), eta.begin());
      }
      return 0.0;
    }
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      const double trial_loss =
          kernels::logit_loss_shifted(eta, x, step * d, design.y()) * inv_n;
      const double trial = trial_loss + pen * std::abs(b + step * d);
      if (trial <= current + kArmijo * step * predicted && trial < current) {
        kernels::axpy(step * d, x, eta);
        b += step * d;
        loss = trial_loss;
        objective += trial - current;
        return std::abs(step * d);
      }
    }
    return 0.0;
  };

  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double max_change = update(p);
    for (std::size_t j = 0; j < p; ++j) {
      if (!design.constant(j)) max_change = std::max(max_change, update(j));
    }
    res.sweeps = sweep;
    res.objective = objective;
    if (on_sweep) on_sweep(sweep, res.objective);
    if (max_change < options.tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

GlmFit to_fit(const LogisticDesign& design, const LassoResult& result, double lambda) {
  GlmFit fit;
  fit.schema = design.schema();
  fit.lambda = lambda;
  fit.converged = result.converged;
  fit.objective = result.objective;
  fit.sweeps = result.sweeps;
  fit.coefficients.assign(design.p(), 0.0);
  fit.feature_mean.resize(design.p());
  fit.feature_sd.resize(design.p());
  fit.intercept = result.state.intercept;
  for (std::size_t j = 0; j < design.p(); ++j) {
    fit.feature_mean[j] = design.mean(j);
    fit.feature_sd[j] = design.sd(j);
    if (design.constant(j)) continue;
    const double c = result.state.beta[j] / design.sd(j);
    fit.coefficients[j] = c;
    fit.intercept -= c * design.mean(j);
  }
  return fit;
}

GlmFit fit_lasso_logit(const Dataset& d, Target target,
                       std::span<const std::size_t> rows, double lambda,
                       const LassoOptions& options) {
  if (lambda < 0.0 || !std::isfinite(lambda)) throw DomainError("lambda must be nonnegative");
  if (rows.empty()) throw InsufficientDataError("lasso fit: empty subset");
  const LogisticDesign design(d, target, rows);
  require_both_classes(design.y(), std::string("lasso fit on ") + target_name(target));
  return to_fit(design, solve_lasso(design, lambda, nullptr, options), lambda);
}

std::vector<double> predict_rows(const GlmFit& fit, const Dataset& d,
                                 std::span<const std::size_t> rows) {
  if (d.schema() != fit.schema) {
    throw SchemaError("prediction dataset schema does not match the fitted model");
  }
  std::vector<double> eta(rows.size(), fit.intercept);
  for (std::size_t j = 0; j < fit.coefficients.size(); ++j) {
    const double c = fit.coefficients[j];
    if (c == 0.0) continue;
    const auto col = d.column(j);
    for (std::size_t k = 0; k < rows.size(); ++k) eta[k] += c * col[rows[k]];
  }
  std::vector<double> p(rows.size());
  kernels::sigmoid(eta, p);
  for (double& v : p) v = clamp_probability(v);
  return p;
}

std::vector<double> predict(const GlmFit& fit, const Dataset& d) {
  if (d.schema() != fit.schema) {
    throw SchemaError("prediction dataset schema does not match the fitted model");
  }
  std::vector<double> eta(d.size(), fit.intercept);
  for (std::size_t j = 0; j < fit.coefficients.size(); ++j) {
    if (fit.coefficients[j] != 0.0) kernels::axpy(fit.coefficients[j], d.column(j), eta);
  }
  std::vector<double> p(d.size());
  kernels::sigmoid(eta, p);
  for (double& v : p) v = clamp_probability(v);
  return p;
}

double mean_log_loss(std::span<const double> prob, std::span<const double> y) {
  if (prob.size() != y.size()) throw AlignmentError("log loss: length mismatch");
  if (prob.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = clamp_probability(prob[i]);
    s -= y[i] != 0.0 ? std::log(p) : std::log1p(-p);
  }
  return s / static_cast<double>(prob.size());
}

CvResult cross_validate(const Dataset& d, Target target,
                        std::span<const std::size_t> rows, const CvOptions& options) {
  if (options.folds < 2) throw DomainError("cross-validation needs at least 2 folds");
  if (rows.size() < options.folds) {
    throw InsufficientDataError("fewer units than cross-validation folds");
  }
  const LogisticDesign full(d, target, rows);
  require_both_classes(full.y(), std::string("cross-validation on ") + target_name(target));

  CvResult cv;
  cv.lambdas = options.lambda_grid.empty() ? lambda_path(lambda_max(full))
                                           : options.lambda_grid;
  std::sort(cv.lambdas.begin(), cv.lambdas.end(), std::greater<>());
  for (double l : cv.lambdas) {
    if (!(l >= 0.0)) throw DomainError("lambda grid values must be nonnegative");
  }
  const std::size_t L = cv.lambdas.size();

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold_of(rows.size());
  for (std::size_t k = 0; k < order.size(); ++k) fold_of[order[k]] = k % options.folds;

  const auto ycol = target_column(d, target);
  std::vector<std::vector<double>> losses(L, std::vector<double>(options.folds));
  for (std::size_t f = 0; f < options.folds; ++f) {
    RowSet train, test;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      (fold_of[k] == f ? test : train).push_back(rows[k]);
    }
    const LogisticDesign design(d, target, train);
    require_both_classes(design.y(), "cross-validation training fold");
    std::vector<double> ytest;
    ytest.reserve(test.size());
    for (std::size_t r : test) ytest.push_back(ycol[r]);
    LassoResult prev;
    for (std::size_t l = 0; l < L; ++l) {
      prev = solve_lasso(design, cv.lambdas[l], l ? &prev.state : nullptr, options.lasso);
      const GlmFit fit = to_fit(design, prev, cv.lambdas[l]);
      losses[l][f] = mean_log_loss(predict_rows(fit, d, test), ytest);
    }
  }

  cv.mean_loss.resize(L);
  cv.se_loss.resize(L);
  const double K = static_cast<double>(options.folds);
  for (std::size_t l = 0; l < L; ++l) {
    const double m = std::accumulate(losses[l].begin(), losses[l].end(), 0.0) / K;
    double ss = 0.0;
    for (double v : losses[l]) ss += (v - m) * (v - m);
    cv.mean_loss[l] = m;
    cv.se_loss[l] = std::sqrt(ss / (K - 1.0)) / std::sqrt(K);
  }
  cv.min_index = static_cast<std::size_t>(
      std::min_element(cv.mean_loss.begin(), cv.mean_loss.end()) - cv.mean_loss.begin());
  const double bound = cv.mean_loss[cv.min_index] + cv.se_loss[cv.min_index];
  cv.one_se_index = cv.min_index;
  for (std::size_t l = 0; l < L; ++l) {
    if (cv.mean_loss[l] <= bound) {
      cv.one_se_index = l;
      break;
    }
  }
  return cv;
}

GlmFit fit_lasso_logit_cv(const Dataset& d, Target target,
                          std::span<const std::size_t> rows,
                          const CvOptions& options, CvResult* report) {
  CvResult cv = cross_validate(d, target, rows, options);
  const LogisticDesign design(d, target, rows);
  LassoResult prev;
  for (std::size_t l = 0; l <= cv.one_se_index; ++l) {
    prev = solve_lasso(design, cv.lambdas[l], l ? &prev.state : nullptr, options.lasso);
  }
  GlmFit fit = to_fit(design, prev, cv.lambdas[cv.one_se_index]);
  if (report != nullptr) *report = std::move(cv);
  return fit;
}

NuisanceEstimates predict_nuisance(const GlmFit& mu0, const GlmFit& mu1,
                                   const GlmFit& e, const Dataset& target) {
  NuisanceEstimates nz;
  nz.ids.assign(target.ids().begin(), target.ids().end());
  nz.mu0_hat = predict(mu0, target);
  nz.mu1_hat = predict(mu1, target);
  nz.e_hat = predict(e, target);
  nz.mu0_fit = mu0;
  nz.mu1_fit = mu1;
  nz.e_fit = e;
  return nz;
}

NuisanceEstimates fit_nuisance(const Dataset& d, std::span<const UnitId> fold,
                               const Dataset& target, const CvOptions& options) {
  const RowSet rows = rows_of(d, fold);
  if (rows.empty()) throw InsufficientDataError("nuisance fold is empty");
  RowSet untreated, treated;
  for (std::size_t r : rows) (d.treatment_at(r) ? treated : untreated).push_back(r);
  auto check_arm = [&](const RowSet& arm, const char* name) {
    std::vector<double> y;
    for (std::size_t r : arm) y.push_back(d.outcome()[r]);
    if (arm.empty()) throw DegenerateTargetError(std::string("nuisance fold has no ") + name + " units");
    require_both_classes(y, std::string("outcome among ") + name + " units");
  };
  check_arm(untreated, "untreated");
  check_arm(treated, "treated");
  const GlmFit mu0 = fit_lasso_logit_cv(d, Target::kOutcome, untreated, options);
  const GlmFit mu1 = fit_lasso_logit_cv(d, Target::kOutcome, treated, options);
  const GlmFit e = fit_lasso_logit_cv(d, Target::kTreatment, rows, options);
  return predict_nuisance(mu0, mu1, e, target);
}

void check_aligned(const Dataset& d, const NuisanceEstimates& nz) {
  if (nz.ids.size() != d.size() || nz.mu0_hat.size() != d.size() ||
      nz.mu1_hat.size() != d.size() || nz.e_hat.size() != d.size()) {
    throw AlignmentError("nuisance estimates are not aligned with the dataset (size)");
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (nz.ids[i] != d.id(i)) {
      throw AlignmentError("nuisance estimates are not aligned with the dataset at row " +
                           std::to_string(i + 1));
    }
  }
}

ResultsTable nuisance_table(const NuisanceEstimates& nz) {
  ResultsTable t({"id", "mu0_hat", "mu1_hat", "e_hat"});
  for (std::size_t i = 0; i < nz.size(); ++i) {
    t.add_row({static_cast<std::int64_t>(nz.ids[i]), nz.mu0_hat[i], nz.mu1_hat[i], nz.e_hat[i]});
  }
  return t;
}

}  // namespace polsens
