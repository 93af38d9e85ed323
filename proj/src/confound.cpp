#include "polsens/confound.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <tuple>

#include <boost/math/special_functions/erf.hpp>

#include "polsens/errors.hpp"
#include "polsens/kernels.hpp"

namespace polsens {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kLog2 = 0.69314718055994530942;

double log_normal_cdf(double a) { return std::log(0.5 * std::erfc(-a / std::numbers::sqrt2)); }

// phi(a) / Phi(a)
double normal_hazard(double a) {
  const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  return phi / (0.5 * std::erfc(-a / std::numbers::sqrt2));
}

// Gaussian random-walk steps shared by both chain types.
double walk_steps(std::span<const double> x, double tau, std::span<double> gx, double* gt,
                  bool truncated) {
  double lp = 0.0;
  const double inv2 = 1.0 / (tau * tau);
  for (std::size_t j = 1; j < x.size(); ++j) {
    const double d = x[j] - x[j - 1];
    lp += -kHalfLog2Pi - std::log(tau) - 0.5 * d * d * inv2;
    if (!gx.empty()) {
      gx[j] -= d * inv2;
      gx[j - 1] += d * inv2;
    }
    if (gt) *gt += -1.0 / tau + d * d * inv2 / tau;
    if (truncated) {
      const double a = x[j - 1] / tau;
      lp -= log_normal_cdf(a);
      const double h = normal_hazard(a);
      if (!gx.empty()) gx[j - 1] -= h / tau;
      if (gt) *gt += h * a / tau;
    }
  }
  return lp;
}

double norm_cdf(double a) { return 0.5 * std::erfc(-a / std::numbers::sqrt2); }
double log_norm_pdf(double a) { return -kHalfLog2Pi - 0.5 * a * a; }

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) return std::numeric_limits<double>::quiet_NaN();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// Standardised truncated step: z with z > -c and Phi(-z) = Phi(c) Phi(-v),
// i.e. z ~ N(0,1) truncated to (-c, inf) when v ~ N(0,1). The two branches
// are the same map, arranged so the argument of the quantile stays small.
struct TruncatedStep {
  double z, dz_dv, dz_dc;
};

TruncatedStep truncated_step(double c, double v) {
  TruncatedStep s;
  s.z = v >= 0.0 ? -norm_quantile(norm_cdf(c) * norm_cdf(-v))
                 : norm_quantile(norm_cdf(-c) + norm_cdf(v) * norm_cdf(c));
  const double lz = log_norm_pdf(s.z);
  s.dz_dv = std::exp(log_normal_cdf(c) + log_norm_pdf(v) - lz);
  s.dz_dc = -std::exp(log_norm_pdf(c) + log_normal_cdf(-v) - lz);
  return s;
}

// Inverse of truncated_step in v.
double truncated_step_inverse(double c, double z) {
  const double ratio = norm_cdf(-z) / norm_cdf(c);
  return ratio <= 0.5 ? -norm_quantile(ratio) : norm_quantile((norm_cdf(z) - norm_cdf(-c)) / norm_cdf(c));
}

}  // namespace

std::vector<double> positive_walk_from_normals(std::span<const double> v, double tau, double* log_jacobian) {
  std::vector<double> x(v.size());
  double lj = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k == 0) {
      const auto s = truncated_step(0.0, v[0]);
      x[0] = s.z;
      lj += std::log(s.dz_dv);
    } else {
      const auto s = truncated_step(x[k - 1] / tau, v[k]);
      x[k] = x[k - 1] + tau * s.z;
      lj += std::log(tau * s.dz_dv);
    }
  }
  if (log_jacobian) *log_jacobian = lj;
  return x;
}

std::vector<double> positive_walk_to_normals(std::span<const double> x, double tau) {
  std::vector<double> v(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    v[k] = k == 0 ? truncated_step_inverse(0.0, x[0]) : truncated_step_inverse(x[k - 1] / tau, (x[k] - x[k - 1]) / tau);
  }
  return v;
}

const char* chain_name(std::size_t c) {
  static const char* names[kChainCount] = {
      "untreated_intercept", "untreated_slope", "untreated_loading",
      "treated_intercept",   "treated_slope",   "treated_loading",
      "assign_intercept",    "assign_slope",    "assign_loading"};
  return names[c];
}

BinAssignment bin_by_risk(std::span<const double> score, std::span<const UnitId> ids,
                          std::size_t K) {
  const std::size_t n = score.size();
  if (ids.size() != n) throw AlignmentError("bin scores and ids differ in length");
  if (K < 1) throw DomainError("number of bins must be at least 1");
  if (K > n) throw DomainError("more bins (" + std::to_string(K) + ") than units (" + std::to_string(n) + ")");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score[a] != score[b] ? score[a] < score[b] : ids[a] < ids[b];
  });
  BinAssignment bins;
  bins.K = K;
  bins.group.resize(n);
  bins.sizes.resize(K);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < K; ++k) {
    bins.sizes[k] = n / K + (k < n % K ? 1 : 0);
    for (std::size_t m = 0; m < bins.sizes[k]; ++m) bins.group[order[pos++]] = k;
  }
  return bins;
}

double random_walk_lpdf(std::span<const double> x, double tau, std::span<double> grad_x,
                        double* grad_tau) {
  if (x.empty()) return 0.0;
  double lp = -kHalfLog2Pi - 0.5 * x[0] * x[0];
  if (!grad_x.empty()) grad_x[0] -= x[0];
  return lp + walk_steps(x, tau, grad_x, grad_tau, false);
}

double positive_random_walk_lpdf(std::span<const double> x, double tau, std::span<double> grad_x,
                                 double* grad_tau) {
  if (x.empty()) return 0.0;
  double lp = kLog2 - kHalfLog2Pi - 0.5 * x[0] * x[0];
  if (!grad_x.empty()) grad_x[0] -= x[0];
  return lp + walk_steps(x, tau, grad_x, grad_tau, true);
}

ConfoundModel::ConfoundModel(const Dataset& d, const NuisanceEstimates& nz, BinAssignment bins,
                             const SensitivitySpec& spec)
    : n_(d.size()),
      bins_(std::move(bins)),
      sigma_tau_(spec.sigma_tau),
      coordinates_(spec.coordinates),
      pin_loadings_(spec.pin_loadings) {
  check_aligned(d, nz);
  if (bins_.group.size() != n_) throw AlignmentError("bin assignment does not cover the dataset");
  if (!(sigma_tau_ > 0.0)) throw DomainError("prior scale sigma_tau must be positive");
  if (bins_.K < 1) throw DomainError("number of bins must be at least 1");

  row_of_slot_.resize(n_);
  std::iota(row_of_slot_.begin(), row_of_slot_.end(), 0);
  const auto t = d.treatment();
  std::stable_sort(row_of_slot_.begin(), row_of_slot_.end(), [&](std::size_t a, std::size_t b) {
    if (bins_.group[a] != bins_.group[b]) return bins_.group[a] < bins_.group[b];
    return t[a] < t[b];
  });
  slot_of_row_.resize(n_);
  for (std::size_t s = 0; s < n_; ++s) slot_of_row_[row_of_slot_[s]] = s;

  ids_.assign(d.ids().begin(), d.ids().end());
  for (std::size_t s = 0; s < n_; ++s) {
    const std::size_t r = row_of_slot_[s];
    t_.push_back(t[r]);
    y_.push_back(d.outcome()[r]);
    mu0_.push_back(nz.mu0_hat[r]);
    mu1_.push_back(nz.mu1_hat[r]);
    e_.push_back(nz.e_hat[r]);
  }
  untreated_.resize(bins_.K);
  treated_.resize(bins_.K);
  std::size_t s = 0;
  for (std::size_t k = 0; k < bins_.K; ++k) {
    const std::size_t b = s;
    while (s < n_ && bins_.group[row_of_slot_[s]] == k && t_[s] == 0.0) ++s;
    untreated_[k] = {b, s};
    const std::size_t m = s;
    while (s < n_ && bins_.group[row_of_slot_[s]] == k) ++s;
    treated_[k] = {m, s};
  }
}

bool ConfoundModel::noncentered(std::size_t chain) const {
  return coordinates_ == ChainCoordinates::kNonCentered ||
         (coordinates_ == ChainCoordinates::kLoadingsNonCentered && is_loading(chain));
}

void ConfoundModel::decode(std::span<const double> q, std::vector<double>& coef) const {
  const std::size_t K = bins_.K;
  coef.resize(kChainCount * K);
  for (std::size_t c = 0; c < kChainCount; ++c) {
    const auto v = q.subspan(chain_offset(c), K);
    double* x = coef.data() + c * K;
    const double tau = std::exp(q[tau_offset() + c]);
    if (!noncentered(c)) {
      for (std::size_t k = 0; k < K; ++k) x[k] = is_loading(c) ? std::exp(v[k]) : v[k];
    } else if (is_loading(c)) {
      x[0] = truncated_step(0.0, v[0]).z;
      for (std::size_t k = 1; k < K; ++k) x[k] = x[k - 1] + tau * truncated_step(x[k - 1] / tau, v[k]).z;
    } else {
      x[0] = v[0];
      for (std::size_t k = 1; k < K; ++k) x[k] = x[k - 1] + tau * v[k];
    }
  }
}

void ConfoundModel::pull_back(std::span<const double> q, std::span<const double> coef,
                              std::span<const double> g_coef, std::span<double> grad) const {
  const std::size_t K = bins_.K;
  thread_local std::vector<double> gx;
  for (std::size_t c = 0; c < kChainCount; ++c) {
    const auto v = q.subspan(chain_offset(c), K);
    const double* x = coef.data() + c * K;
    auto gv = grad.subspan(chain_offset(c), K);
    gx.assign(g_coef.begin() + static_cast<long>(c * K), g_coef.begin() + static_cast<long>((c + 1) * K));
    const double tau = std::exp(q[tau_offset() + c]);
    double g_tau = 0.0;
    if (!noncentered(c)) {
      for (std::size_t k = 0; k < K; ++k) gv[k] += is_loading(c) ? gx[k] * x[k] : gx[k];
      continue;
    }
    if (is_loading(c)) {
      for (std::size_t k = K; k-- > 1;) {
        const double cc = x[k - 1] / tau;
        const auto st = truncated_step(cc, v[k]);
        gv[k] += gx[k] * tau * st.dz_dv;
        gx[k - 1] += gx[k] * (1.0 + st.dz_dc);
        g_tau += gx[k] * (st.z - cc * st.dz_dc);
      }
      gv[0] += gx[0] * truncated_step(0.0, v[0]).dz_dv;
    } else {
      for (std::size_t k = K; k-- > 1;) {
        gv[k] += gx[k] * tau;
        g_tau += gx[k] * v[k];
        gx[k - 1] += gx[k];
      }
      gv[0] += gx[0];
    }
    grad[tau_offset() + c] += g_tau * tau;
  }
}

double ConfoundModel::log_likelihood(std::span<const double> q, std::span<double> grad) const {
  thread_local std::vector<double> eta, resid, coefs, g_coef;
  eta.resize(n_);
  resid.resize(n_);
  decode(q, coefs);
  g_coef.assign(coefs.size(), 0.0);
  const std::size_t K = bins_.K;
  const auto u = q.subspan(u_offset(), n_);
  auto gu = grad.subspan(u_offset(), n_);
  auto coef = [&](std::size_t c, std::size_t k) {
    return is_loading(c) && pin_loadings_ ? 0.0 : coefs[c * K + k];
  };

  double ll = 0.0;
  // One logistic equation over a contiguous slot range.
  auto equation = [&](std::size_t c0, Range r, std::span<const double> x, std::span<const double> target,
                      std::size_t k) {
    const std::size_t len = r.end - r.begin;
    if (len == 0) return;
    const double a = coef(c0, k), b = coef(c0 + 1, k), l = coef(c0 + 2, k);
    const auto xs = x.subspan(r.begin, len);
    const auto us = u.subspan(r.begin, len);
    std::span<double> es(eta.data() + r.begin, len), rs(resid.data() + r.begin, len);
    kernels::affine(a, b, xs, l, us, es);
    ll += kernels::bernoulli_logit(es, target.subspan(r.begin, len), rs);
    g_coef[c0 * K + k] += kernels::sum(rs);
    g_coef[(c0 + 1) * K + k] += kernels::dot(rs, xs);
    if (!pin_loadings_) g_coef[(c0 + 2) * K + k] += kernels::dot(rs, us);
    if (l != 0.0) kernels::axpy(l, rs, gu.subspan(r.begin, len));
  };

  for (std::size_t k = 0; k < K; ++k) {
    const Range all{untreated_[k].begin, treated_[k].end};
    equation(kAssignIntercept, all, e_, t_, k);
    equation(kUntreatedIntercept, untreated_[k], mu0_, y_, k);
    equation(kTreatedIntercept, treated_[k], mu1_, y_, k);
  }
  pull_back(q, coefs, g_coef, grad);
  return ll;
}

double ConfoundModel::log_prior(std::span<const double> q, std::span<double> grad) const {
  const std::size_t K = bins_.K;
  double lp = 0.0;
  thread_local std::vector<double> x, gx;
  x.resize(K);
  gx.resize(K);
  for (std::size_t c = 0; c < kChainCount; ++c) {
    const double w = q[tau_offset() + c];
    const double tau = std::exp(w);
    const auto z = q.subspan(chain_offset(c), K);
    std::fill(gx.begin(), gx.end(), 0.0);
    double gtau = 0.0;
    if (noncentered(c)) {
      // The walk structure lives in the transform; the coordinates are iid N(0,1).
      for (std::size_t k = 0; k < K; ++k) {
        lp += log_norm_pdf(z[k]);
        grad[chain_offset(c) + k] -= z[k];
      }
    } else if (is_loading(c)) {
      for (std::size_t k = 0; k < K; ++k) x[k] = std::exp(z[k]);
      lp += positive_random_walk_lpdf(x, tau, gx, &gtau);
      for (std::size_t k = 0; k < K; ++k) {
        lp += z[k];  // Jacobian
        grad[chain_offset(c) + k] += gx[k] * x[k] + 1.0;
      }
    } else {
      lp += random_walk_lpdf(z, tau, gx, &gtau);
      for (std::size_t k = 0; k < K; ++k) grad[chain_offset(c) + k] += gx[k];
    }
    // Half-normal scale on the log scale, Jacobian included.
    const double s2 = sigma_tau_ * sigma_tau_;
    lp += kLog2 - kHalfLog2Pi - std::log(sigma_tau_) - 0.5 * tau * tau / s2 + w;
    grad[tau_offset() + c] += gtau * tau - tau * tau / s2 + 1.0;
  }
  const auto u = q.subspan(u_offset(), n_);
  double uu = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    uu += u[i] * u[i];
    grad[u_offset() + i] -= u[i];
  }
  lp += -kHalfLog2Pi * static_cast<double>(n_) - 0.5 * uu;
  return lp;
}

double ConfoundModel::log_posterior(std::span<const double> q, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  return log_prior(q, grad) + log_likelihood(q, grad);
}

LogDensityModel ConfoundModel::density() const {
  LogDensityModel m;
  m.dimension = dimension();
  m.value_and_gradient = [this](std::span<const double> q, std::span<double> g) {
    return log_posterior(q, g);
  };
  m.parameter_names = parameter_names();
  return m;
}

std::vector<std::string> ConfoundModel::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(dimension());
  for (std::size_t c = 0; c < kChainCount; ++c) {
    for (std::size_t k = 0; k < bins_.K; ++k) {
      const char* prefix = noncentered(c) ? "std_" : is_loading(c) ? "log_" : "";
      names.push_back(prefix + std::string(chain_name(c)) + "[" + std::to_string(k + 1) + "]");
    }
  }
  for (std::size_t c = 0; c < kChainCount; ++c) names.push_back(std::string("log_scale_") + chain_name(c));
  for (std::size_t s = 0; s < n_; ++s) names.push_back("u[" + std::to_string(ids_[row_of_slot_[s]]) + "]");
  return names;
}

ConfoundParams ConfoundModel::unpack(std::span<const double> q) const {
  if (q.size() < dimension()) throw AlignmentError("parameter vector is too short");
  ConfoundParams p;
  std::vector<double> coefs;
  decode(q, coefs);
  for (std::size_t c = 0; c < kChainCount; ++c) {
    p.coef[c].assign(coefs.begin() + static_cast<long>(c * bins_.K),
                     coefs.begin() + static_cast<long>((c + 1) * bins_.K));
    p.tau[c] = std::exp(q[tau_offset() + c]);
  }
  p.u.resize(n_);
  for (std::size_t r = 0; r < n_; ++r) p.u[r] = q[u_offset() + slot_of_row_[r]];
  return p;
}

std::vector<double> ConfoundModel::pack(const ConfoundParams& p) const {
  std::vector<double> q(dimension());
  for (std::size_t c = 0; c < kChainCount; ++c) {
    if (p.coef[c].size() != bins_.K) throw AlignmentError("coefficient chain has the wrong length");
    if (!(p.tau[c] > 0.0)) throw DomainError("random-walk scales must be positive");
    const double tau = p.tau[c];
    q[tau_offset() + c] = std::log(tau);
    const auto& x = p.coef[c];
    if (is_loading(c)) {
      for (double v : x) {
        if (!(v > 0.0)) throw DomainError("loadings must be positive");
      }
    }
    for (std::size_t k = 0; k < bins_.K; ++k) {
      double v;
      if (!noncentered(c)) {
        v = is_loading(c) ? std::log(x[k]) : x[k];
      } else if (is_loading(c)) {
        v = k == 0 ? truncated_step_inverse(0.0, x[0]) : truncated_step_inverse(x[k - 1] / tau, (x[k] - x[k - 1]) / tau);
      } else {
        v = k == 0 ? x[0] : (x[k] - x[k - 1]) / tau;
      }
      q[chain_offset(c) + k] = v;
    }
  }
  if (p.u.size() != n_) throw AlignmentError("latent vector has the wrong length");
  for (std::size_t r = 0; r < n_; ++r) q[u_offset() + slot_of_row_[r]] = p.u[r];
  return q;
}

void ConfoundModel::counterfactual(std::span<const double> q, std::span<double> out) const {
  thread_local std::vector<double> eta, prob, coefs;
  decode(q, coefs);
  auto coef = [&](std::size_t c, std::size_t k) {
    return is_loading(c) && pin_loadings_ ? 0.0 : coefs[c * bins_.K + k];
  };
  eta.resize(n_);
  prob.resize(n_);
  const auto u = q.subspan(u_offset(), n_);
  for (std::size_t k = 0; k < bins_.K; ++k) {
    // Observed untreated units need the treated-arm probability and vice versa.
    for (const auto& [r, c0, x] : {std::tuple{untreated_[k], kTreatedIntercept, &mu1_},
                                   std::tuple{treated_[k], kUntreatedIntercept, &mu0_}}) {
      const std::size_t len = r.end - r.begin;
      if (len == 0) continue;
      kernels::affine(coef(c0, k), coef(c0 + 1, k), std::span<const double>(*x).subspan(r.begin, len),
                      coef(c0 + 2, k), u.subspan(r.begin, len),
                      std::span<double>(eta.data() + r.begin, len));
    }
  }
  kernels::sigmoid(eta, prob);
  for (std::size_t s = 0; s < n_; ++s) out[row_of_slot_[s]] = prob[s];
}

CounterfactualDraws::CounterfactualDraws(std::vector<UnitId> ids, std::vector<double> treatment,
                                         std::vector<double> outcome, std::size_t draws,
                                         std::vector<double> values)
    : ids_(std::move(ids)), t_(std::move(treatment)), y_(std::move(outcome)), draws_(draws),
      values_(std::move(values)) {
  if (t_.size() != ids_.size() || y_.size() != ids_.size() || values_.size() != draws_ * ids_.size()) {
    throw AlignmentError("counterfactual draws have inconsistent sizes");
  }
}

CounterfactualDraws CounterfactualDraws::from_posterior(const ConfoundModel& model, const Dataset& d,
                                                        const PosteriorDraws& draws) {
  if (draws.dimension != model.dimension()) {
    throw AlignmentError("posterior draws do not match the model dimension");
  }
  if (d.size() != model.n()) throw AlignmentError("dataset does not match the model");
  const std::size_t S = draws.chains * draws.iterations, n = d.size();
  std::vector<double> values(S * n);
  for (std::size_t s = 0; s < S; ++s) {
    const std::span<const double> q(draws.values.data() + s * draws.dimension, draws.dimension);
    model.counterfactual(q, std::span<double>(values.data() + s * n, n));
  }
  return CounterfactualDraws({d.ids().begin(), d.ids().end()}, {d.treatment().begin(), d.treatment().end()},
                             {d.outcome().begin(), d.outcome().end()}, S, std::move(values));
}

std::vector<double> CounterfactualDraws::policy_value(const Policy& pi) const {
  if (pi.size() != ids_.size()) throw AlignmentError("policy does not match the posterior units");
  const auto pids = pi.ids();
  double observed = 0.0;
  std::vector<std::size_t> imputed;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (pids[i] != ids_[i]) throw AlignmentError("policy unit order differs from the posterior units");
    if (pi.treats(i) == (t_[i] != 0.0)) {
      observed += y_[i];
    } else {
      imputed.push_back(i);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(ids_.size());
  std::vector<double> out(draws_);
  for (std::size_t s = 0; s < draws_; ++s) {
    const double* row = values_.data() + s * ids_.size();
    double acc = observed;
    for (std::size_t i : imputed) acc += row[i];
    out[s] = acc * inv_n;
  }
  return out;
}

std::vector<double> CounterfactualDraws::subgroup_ate(std::span<const std::uint8_t> in_group) const {
  return polsens::subgroup_ate(ids_, in_group, [this](const Policy& pi) { return policy_value(pi); });
}

SensitivityFit fit_sensitivity(const Dataset& d, const NuisanceEstimates& nz,
                               const SensitivitySpec& spec) {
  check_aligned(d, nz);
  SensitivityFit fit;
  fit.bins = bin_by_risk(nz.mu0_hat, d.ids(), spec.K);
  const ConfoundModel model(d, nz, fit.bins, spec);
  fit.draws = sample(model.density(), spec.sampler);
  fit.max_rhat = 0.0;
  bool any_nan = false;
  for (double r : fit.draws.rhat) {
    if (std::isnan(r)) {
      any_nan = true;
      continue;
    }
    fit.max_rhat = std::max(fit.max_rhat, r);
  }
  fit.rhat_flag = any_nan || fit.max_rhat > 1.1;
  fit.rhat_clean = !any_nan && fit.max_rhat <= 1.05;
  return fit;
}

std::vector<double> posterior_policy_value(const SensitivityFit& fit, const Dataset& d,
                                           const NuisanceEstimates& nz, const SensitivitySpec& spec,
                                           const Policy& pi) {
  const ConfoundModel model(d, nz, fit.bins, spec);
  return CounterfactualDraws::from_posterior(model, d, fit.draws).policy_value(pi);
}

double sample_quantile(std::vector<double> x, double p) {
  if (x.empty()) throw InsufficientDrawsError("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double h = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

BandSummary summarize(std::span<const double> x) {
  if (x.empty()) throw InsufficientDrawsError("summary of an empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  BandSummary b{q(0.025), q(0.25), q(0.5), q(0.75), q(0.975), 0.0, 0.0};
  b.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double a : v) ss += (a - b.mean) * (a - b.mean);
  b.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return b;
}

ResultsTable sensitivity_curve_table(const std::vector<Policy>& family,
                                     const std::vector<BandSummary>& bands) {
  if (family.size() != bands.size()) throw AlignmentError("curve columns differ in length");
  ResultsTable t({"threshold", "release_rate", "q025", "q25", "q50", "q75", "q975"});
  for (std::size_t k = 0; k < family.size(); ++k) {
    const auto& b = bands[k];
    t.add_row({family[k].cutoff(), family[k].release_rate(), b.q025, b.q25, b.q50, b.q75, b.q975});
  }
  return t;
}

}  // namespace polsens
