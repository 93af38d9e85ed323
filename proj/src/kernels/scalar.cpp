// Scalar reference kernels. These define the semantics the SIMD variants
// are tested against, so they favour clarity over speed.

#include <algorithm>
#include <cmath>

#include "polsens/kernels.hpp"

namespace polsens::kernels {
namespace {

inline double softplus(double eta) {
  return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

inline double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double z = std::exp(eta);
  return z / (1.0 + z);
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void affine(double a, double b, const double* x, double c, const double* u,
            double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a + b * x[i] + c * u[i];
}

double bernoulli_logit(const double* eta, const double* y, double* resid,
                       std::size_t n) {
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ll += y[i] * eta[i] - softplus(eta[i]);
    resid[i] = y[i] - logistic(eta[i]);
  }
  return ll;
}

void sigmoid(const double* eta, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = logistic(eta[i]);
}

CoordStats logit_coord(const double* x, const double* eta, const double* y,
                       std::size_t n) {
  CoordStats s{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double p = logistic(eta[i]);
    s.gradient += x[i] * (p - y[i]);
    s.curvature += x[i] * x[i] * p * (1.0 - p);
  }
  return s;
}

double logit_loss_shifted(const double* eta, const double* x, double d,
                          const double* y, std::size_t n) {
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = eta[i] + d * x[i];
    loss += softplus(e) - y[i] * e;
  }
  return loss;
}

constexpr KernelTable kScalar{
    "scalar", &sum,     &dot,         &axpy,
    &affine,  &bernoulli_logit, &sigmoid, &logit_coord,
    &logit_loss_shifted,
};

}  // namespace

const KernelTable& scalar() { return kScalar; }

}  // namespace polsens::kernels
