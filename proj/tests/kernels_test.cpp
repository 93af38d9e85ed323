// Scalar vs SIMD equivalence for every kernel. Lengths sweep 0..37 so each
// masked tail width is exercised; eta includes the clamp region.

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "polsens/kernels.hpp"

using polsens::kernels::KernelTable;

namespace {

struct Inputs {
  std::vector<double> x, u, eta, y;
};

Inputs make_inputs(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> wide(-40.0, 40.0);
  std::bernoulli_distribution coin(0.4);
  Inputs in;
  for (std::size_t i = 0; i < n; ++i) {
    in.x.push_back(z(rng));
    in.u.push_back(z(rng));
    // Mix typical values, large magnitudes and exact zeros.
    double e = 3.0 * z(rng);
    if (i % 7 == 3) e = wide(rng);
    if (i % 11 == 5) e = (i % 2 ? 800.0 : -800.0);
    if (i % 13 == 0) e = 0.0;
    in.eta.push_back(e);
    in.y.push_back(coin(rng) ? 1.0 : 0.0);
  }
  return in;
}

void check_close(double a, double b, double scale, double rel = 1e-13) {
  CHECK(std::abs(a - b) <= rel * std::max(1.0, scale));
}

void compare(const KernelTable& ref, const KernelTable& simd) {
  std::mt19937_64 rng(20240611);
  for (std::size_t n = 0; n <= 37; ++n) {
    CAPTURE(n);
    const Inputs in = make_inputs(n, rng);
    double abs_sum = 0.0;
    for (double v : in.x) abs_sum += std::abs(v);
    check_close(ref.sum(in.x.data(), n), simd.sum(in.x.data(), n), abs_sum);
    check_close(ref.dot(in.x.data(), in.u.data(), n),
                simd.dot(in.x.data(), in.u.data(), n), abs_sum * 5.0);

    std::vector<double> y1 = in.u, y2 = in.u;
    ref.axpy(0.37, in.x.data(), y1.data(), n);
    simd.axpy(0.37, in.x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) check_close(y1[i], y2[i], std::abs(y1[i]), 1e-15);

    std::vector<double> a1(n + 1, -7.0), a2(n + 1, -7.0);
    ref.affine(0.5, -1.25, in.x.data(), 2.0, in.u.data(), a1.data(), n);
    simd.affine(0.5, -1.25, in.x.data(), 2.0, in.u.data(), a2.data(), n);
    for (std::size_t i = 0; i < n; ++i) check_close(a1[i], a2[i], std::abs(a1[i]), 1e-15);
    CHECK(a2[n] == -7.0);  // no write past the end

    std::vector<double> r1(n + 1, 9.0), r2(n + 1, 9.0);
    const double ll1 = ref.bernoulli_logit(in.eta.data(), in.y.data(), r1.data(), n);
    const double ll2 = simd.bernoulli_logit(in.eta.data(), in.y.data(), r2.data(), n);
    double ll_scale = 0.0;
    for (double e : in.eta) ll_scale += std::abs(e) + 1.0;
    check_close(ll1, ll2, ll_scale);
    for (std::size_t i = 0; i < n; ++i) check_close(r1[i], r2[i], 1.0, 1e-15);
    CHECK(r2[n] == 9.0);

    std::vector<double> s1(n), s2(n);
    ref.sigmoid(in.eta.data(), s1.data(), n);
    simd.sigmoid(in.eta.data(), s2.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      // Relative agreement, including deep in the lower tail.
      CHECK(std::abs(s1[i] - s2[i]) <= 1e-14 * s1[i] + 1e-300);
    }

    const auto c1 = ref.logit_coord(in.x.data(), in.eta.data(), in.y.data(), n);
    const auto c2 = simd.logit_coord(in.x.data(), in.eta.data(), in.y.data(), n);
    check_close(c1.gradient, c2.gradient, abs_sum);
    check_close(c1.curvature, c2.curvature, abs_sum * abs_sum);

    const double l1 = ref.logit_loss_shifted(in.eta.data(), in.x.data(), -0.8, in.y.data(), n);
    const double l2 = simd.logit_loss_shifted(in.eta.data(), in.x.data(), -0.8, in.y.data(), n);
    check_close(l1, l2, ll_scale);
  }
}

}  // namespace

TEST_CASE("scalar kernels match closed forms") {
  const auto& k = polsens::kernels::scalar();
  const double eta[] = {0.0, 2.0, -3.0};
  const double y[] = {1.0, 0.0, 1.0};
  double r[3];
  const double ll = k.bernoulli_logit(eta, y, r, 3);
  const double expected = (0.0 - std::log(2.0)) + (0.0 - std::log1p(std::exp(2.0))) +
                          (-3.0 - std::log1p(std::exp(-3.0)));
  CHECK(ll == doctest::Approx(expected).epsilon(1e-15));
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK(r[1] == doctest::Approx(-1.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("AVX2 kernels are equivalent to the scalar reference") {
  const KernelTable* simd = polsens::kernels::avx2();
  if (simd == nullptr) {
    MESSAGE("AVX2 unavailable on this CPU; equivalence test skipped");
    return;
  }
  compare(polsens::kernels::scalar(), *simd);
}

TEST_CASE("SIMD softplus keeps relative accuracy across the range") {
  const KernelTable* simd = polsens::kernels::avx2();
  if (simd == nullptr) return;
  std::vector<double> eta;
  for (double e = -745.0; e <= 745.0; e += 0.173) eta.push_back(e);
  const std::vector<double> y(eta.size(), 0.0);
  for (std::size_t i = 0; i < eta.size(); ++i) {
    double r;
    const double got = -simd->bernoulli_logit(&eta[i], &y[i], &r, 1);
    const double want = std::max(eta[i], 0.0) + std::log1p(std::exp(-std::abs(eta[i])));
    CHECK(std::abs(got - want) <= 1e-15 * want + 1e-300);
  }
}

TEST_CASE("active table is one of the known tables") {
  const auto& a = polsens::kernels::active();
  const bool known = (&a == &polsens::kernels::scalar()) ||
                     (&a == polsens::kernels::avx2());
  CHECK(known);
}
