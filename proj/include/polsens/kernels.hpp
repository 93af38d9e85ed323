#pragma once

// Data-parallel inner loops shared by the GLM solver, the confounding
// model's log density and posterior imputation.
//
// Every kernel has a scalar reference implementation and, where the CPU
// supports it, an AVX2+FMA variant. `active()` picks one at first use; the
// choice can be forced with POLSENS_KERNELS=scalar|avx2. Binary vectors
// (treatment, outcome) are passed as doubles holding exactly 0.0 or 1.0.

#include <cstddef>
#include <span>

namespace polsens::kernels {

struct CoordStats {
  double gradient;   // sum_i x_i * (sigmoid(eta_i) - y_i)
  double curvature;  // sum_i x_i^2 * sigmoid(eta_i) * (1 - sigmoid(eta_i))
};

struct KernelTable {
  const char* name;
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out = a + b * x + c * u
  void (*affine)(double a, double b, const double* x, double c,
                 const double* u, double* out, std::size_t n);
  // Returns sum_i [y_i * eta_i - log(1 + exp(eta_i))] and writes
  // resid_i = y_i - sigmoid(eta_i).
  double (*bernoulli_logit)(const double* eta, const double* y,
                            double* resid, std::size_t n);
  void (*sigmoid)(const double* eta, double* out, std::size_t n);
  CoordStats (*logit_coord)(const double* x, const double* eta,
                            const double* y, std::size_t n);
  // sum_i [log(1 + exp(eta_i + d x_i)) - y_i (eta_i + d x_i)]
  double (*logit_loss_shifted)(const double* eta, const double* x, double d,
                               const double* y, std::size_t n);
};

const KernelTable& scalar();

// nullptr when the running CPU lacks AVX2/FMA or the build excluded it.
const KernelTable* avx2();

const KernelTable& active();

// Overrides the dispatch choice for the rest of the process (tests, CLI).
void set_active(const KernelTable& table);

// Span conveniences over the active table.
inline double sum(std::span<const double> x) {
  return active().sum(x.data(), x.size());
}
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void affine(double a, double b, std::span<const double> x, double c,
                   std::span<const double> u, std::span<double> out) {
  active().affine(a, b, x.data(), c, u.data(), out.data(), out.size());
}
inline double bernoulli_logit(std::span<const double> eta,
                              std::span<const double> y,
                              std::span<double> resid) {
  return active().bernoulli_logit(eta.data(), y.data(), resid.data(),
                                  eta.size());
}
inline void sigmoid(std::span<const double> eta, std::span<double> out) {
  active().sigmoid(eta.data(), out.data(), eta.size());
}
inline CoordStats logit_coord(std::span<const double> x,
                              std::span<const double> eta,
                              std::span<const double> y) {
  return active().logit_coord(x.data(), eta.data(), y.data(), eta.size());
}
inline double logit_loss_shifted(std::span<const double> eta,
                                 std::span<const double> x, double d,
                                 std::span<const double> y) {
  return active().logit_loss_shifted(eta.data(), x.data(), d, y.data(),
                                     eta.size());
}

}  // namespace polsens::kernels
