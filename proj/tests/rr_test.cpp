#include <cmath>
#include <random>

#include "doctest.h"
#include "polsens/errors.hpp"
#include "polsens/rr.hpp"

using namespace polsens;

namespace {

struct Instance {
  Dataset data;
  NuisanceEstimates nz;
  RiskScoresPtr scores;
};

Instance make_instance(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CaseRecord> recs(n);
  NuisanceEstimates nz;
  for (std::size_t i = 0; i < n; ++i) {
    const double m0 = 0.05 + 0.5 * u(rng);
    const double m1 = 0.7 * m0 + 0.1 * u(rng);
    const double e = 0.1 + 0.8 * u(rng);
    recs[i] = {static_cast<UnitId>(100 + i), {m0}, u(rng) < e, u(rng) < 0.4};
    nz.ids.push_back(recs[i].id);
    nz.mu0_hat.push_back(m0);
    nz.mu1_hat.push_back(m1);
    nz.e_hat.push_back(e);
  }
  Dataset d({"risk"}, recs);
  auto scores = make_scores({d.ids().begin(), d.ids().end()}, nz.mu0_hat);
  return {std::move(d), std::move(nz), std::move(scores)};
}

// Closed-form intercept: with z = exp(c) and multiplier m, the mixture
// equation is the quadratic m(1 - target) z^2 + (w m + 1 - w - target(1 + m)) z - target = 0.
double quadratic_intercept(double target, double m, double w) {
  const double A = m * (1.0 - target);
  const double B = w * m + 1.0 - w - target * (1.0 + m);
  const double C = -target;
  const double z = (-B + std::sqrt(B * B - 4 * A * C)) / (2 * A);
  return std::log(z);
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> thresholds() { return {0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5}; }

}  // namespace

TEST_CASE("intercept calibration") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double target = 1e-4 + (1 - 2e-4) * u(rng);
    const double m = 1.0 + 4.0 * u(rng);
    const double w = u(rng);
    const double c = calibrate_intercept(target, std::log(m), w);
    CHECK(std::abs(mixture_probability(c, std::log(m), w) - target) < 1e-10);
    CHECK(c == doctest::Approx(quadratic_intercept(target, m, w)).epsilon(1e-9));
  }
  bool flagged = false;
  const double c = calibrate_intercept(0.0, std::log(2.0), 0.5, &flagged);
  CHECK(flagged);
  CHECK(std::isfinite(c));
  flagged = false;
  calibrate_intercept(0.3, std::log(2.0), 0.5, &flagged);
  CHECK_FALSE(flagged);
}

TEST_CASE("no-confounding limit reproduces the direct estimator") {
  const auto inst = make_instance(300, 2);
  for (double p : {0.1, 0.5, 0.9}) {
    for (double s : thresholds()) {
      const auto pi = Policy::absolute(inst.scores, s);
      const double direct = direct_policy_value(inst.data, pi, inst.nz).value;
      CHECK(std::abs(rr_adjusted_value(inst.data, inst.nz, pi, {p, 1, 1, 1}) - direct) < 1e-9);
    }
  }
}

TEST_CASE("five-unit hand enumeration") {
  // (id, covariate, t, y) and nuisance (e, mu0, mu1)
  const std::vector<CaseRecord> recs{
      {1, {0.0}, 1, 1}, {2, {0.0}, 0, 0}, {3, {0.0}, 1, 0}, {4, {0.0}, 0, 1}, {5, {0.0}, 0, 0}};
  NuisanceEstimates nz;
  nz.ids = {1, 2, 3, 4, 5};
  nz.e_hat = {0.6, 0.3, 0.5, 0.2, 0.45};
  nz.mu0_hat = {0.4, 0.2, 0.35, 0.5, 0.1};
  nz.mu1_hat = {0.3, 0.15, 0.2, 0.4, 0.05};
  const Dataset d({"x"}, recs);
  const auto pi = Policy::from_decisions({1, 2, 3, 4, 5}, {0, 0, 1, 1, 0});

  SUBCASE("treatment-only confounder") {
    const RRParams prm{0.5, 2.0, 1.0, 1.0};
    for (std::size_t i = 0; i < 5; ++i) {
      const auto u = rr_calibrate_unit(nz.e_hat[i], nz.mu0_hat[i], nz.mu1_hat[i], recs[i].treatment,
                                       recs[i].outcome, prm);
      const double a = quadratic_intercept(nz.e_hat[i], 2.0, 0.5);
      CHECK(u.assign_intercept == doctest::Approx(a).epsilon(1e-10));
      const double p1 = sig(a + std::log(2.0)), p0 = sig(a);
      CHECK(u.u_given_t[1] == doctest::Approx(p1 / (p0 + p1)).epsilon(1e-12));
      CHECK(u.u_given_t[0] == doctest::Approx((1 - p1) / ((1 - p0) + (1 - p1))).epsilon(1e-12));
    }
    // Outcomes ignore u, so imputation is the fitted missing-arm risk:
    // unit 1 disagrees (mu0 = 0.4), unit 4 disagrees (mu1 = 0.4), others observed.
    const double want = (0.4 + 0 + 0 + 0.4 + 0) / 5.0;
    CHECK(rr_adjusted_value(d, nz, pi, prm) == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("confounder acting on both arms") {
    const RRParams prm{0.3, 2.0, 1.5, 3.0};
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const int t = recs[i].treatment, y = recs[i].outcome;
      const double a = quadratic_intercept(nz.e_hat[i], 2.0, 0.3);
      const double p1 = sig(a + std::log(2.0)), p0 = sig(a);
      const double w1 = 0.3 * p1 / (0.3 * p1 + 0.7 * p0);
      const double w0 = 0.3 * (1 - p1) / (0.3 * (1 - p1) + 0.7 * (1 - p0));
      const double b0 = quadratic_intercept(nz.mu0_hat[i], 1.5, w0);
      const double b1 = quadratic_intercept(nz.mu1_hat[i], 3.0, w1);
      const double m_obs = t ? 3.0 : 1.5, m_mis = t ? 1.5 : 3.0;
      const double b_obs = t ? b1 : b0, b_mis = t ? b0 : b1;
      const double w = t ? w1 : w0;
      const double l1 = y ? sig(b_obs + std::log(m_obs)) : 1 - sig(b_obs + std::log(m_obs));
      const double l0 = y ? sig(b_obs) : 1 - sig(b_obs);
      const double r = w * l1 / (w * l1 + (1 - w) * l0);
      const double imputed = (1 - r) * sig(b_mis) + r * sig(b_mis + std::log(m_mis));
      const auto u = rr_calibrate_unit(nz.e_hat[i], nz.mu0_hat[i], nz.mu1_hat[i], t, y, prm);
      CHECK(u.imputed == doctest::Approx(imputed).epsilon(1e-9));
      total += pi.treats(i) == (t != 0) ? y : imputed;
    }
    CHECK(rr_adjusted_value(d, nz, pi, prm) == doctest::Approx(total / 5).epsilon(1e-9));
  }
}

TEST_CASE("sweep matches pointwise evaluation") {
  const auto inst = make_instance(120, 3);
  const auto family = make_policy_family(inst.scores, thresholds());
  RRGrid g{{0.2, 0.7}, {1.0, 1.8}, {1.0, 1.3, 2.5}, {1.0, 2.2}};
  const auto env = rr_sweep(inst.data, inst.nz, family, g, 1);
  const auto env3 = rr_sweep(inst.data, inst.nz, family, g, 3);
  REQUIRE(env.size() == family.size());
  for (std::size_t k = 0; k < family.size(); ++k) {
    double lo = INFINITY, hi = -INFINITY;
    for (double p : g.p_values)
      for (double ga : g.gamma_values)
        for (double d0 : g.delta0_values)
          for (double d1 : g.delta1_values) {
            const double v = rr_adjusted_value(inst.data, inst.nz, family[k], {p, ga, d0, d1});
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
    CHECK(env[k].min == doctest::Approx(lo).epsilon(1e-12));
    CHECK(env[k].max == doctest::Approx(hi).epsilon(1e-12));
    CHECK(rr_adjusted_value(inst.data, inst.nz, family[k], env[k].argmin) ==
          doctest::Approx(env[k].min).epsilon(1e-12));
    CHECK(rr_adjusted_value(inst.data, inst.nz, family[k], env[k].argmax) ==
          doctest::Approx(env[k].max).epsilon(1e-12));
    CHECK(env3[k].min == env[k].min);
    CHECK(env3[k].max == env[k].max);
    CHECK(env3[k].argmin == env[k].argmin);
  }
}

TEST_CASE("envelope collapse, containment and nesting") {
  const auto inst = make_instance(400, 4);
  const auto family = make_policy_family(inst.scores, thresholds());
  std::vector<double> direct;
  for (const auto& pi : family) direct.push_back(direct_policy_value(inst.data, pi, inst.nz).value);

  const auto flat = rr_sweep(inst.data, inst.nz, family, {{0.5}, {1.0}, {1.0}, {1.0}});
  for (std::size_t k = 0; k < family.size(); ++k) {
    CHECK(std::abs(flat[k].min - direct[k]) < 1e-9);
    CHECK(std::abs(flat[k].max - direct[k]) < 1e-9);
  }

  const auto regimes = default_regimes();
  const auto r1 = rr_sweep(inst.data, inst.nz, family, regimes[0]);
  const auto r2 = rr_sweep(inst.data, inst.nz, family, regimes[1]);
  for (std::size_t k = 0; k < family.size(); ++k) {
    CHECK(r2[k].min <= r1[k].min);
    CHECK(r2[k].max >= r1[k].max);
    CHECK(r1[k].min <= direct[k] + 1e-12);
    CHECK(r1[k].max >= direct[k] - 1e-12);
    CHECK(r1[k].max > r1[k].min);
  }

  // Random sub-grids never widen the envelope.
  std::mt19937_64 rng(9);
  auto pick = [&](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v)
      if (rng() % 2) out.push_back(x);
    if (out.empty()) out.push_back(v[rng() % v.size()]);
    return out;
  };
  for (int trial = 0; trial < 5; ++trial) {
    const RRGrid sub{pick(regimes[0].p_values), pick(regimes[0].gamma_values), pick(regimes[0].delta0_values),
                     pick(regimes[0].delta1_values)};
    const auto e = rr_sweep(inst.data, inst.nz, family, sub);
    for (std::size_t k = 0; k < family.size(); ++k) {
      CHECK(e[k].min >= r1[k].min);
      CHECK(e[k].max <= r1[k].max);
    }
  }
}

TEST_CASE("regime grids") {
  const auto g = rr_regime_grid(2.0);
  CHECK(g.p_values.size() == 9);
  CHECK(g.p_values.front() == doctest::Approx(0.1));
  CHECK(g.gamma_values == std::vector<double>{1.0, std::pow(2.0, 0.25), std::pow(2.0, 0.5), std::pow(2.0, 0.75), 2.0});
  const auto regimes = default_regimes();
  CHECK(regimes[1].gamma_values.back() == 3.0);
  for (double v : regimes[0].delta1_values) {
    CHECK(std::find(regimes[1].delta1_values.begin(), regimes[1].delta1_values.end(), v) !=
          regimes[1].delta1_values.end());
  }
}

TEST_CASE("parameter and grid validation") {
  CHECK_THROWS_AS(RRParams({0.0, 1, 1, 1}).validate(), DomainError);
  CHECK_THROWS_AS(RRParams({1.0, 1, 1, 1}).validate(), DomainError);
  CHECK_THROWS_AS(RRParams({0.5, 0.9, 1, 1}).validate(), DomainError);
  CHECK_THROWS_AS(RRParams({0.5, 1, 1, NAN}).validate(), DomainError);
  CHECK_THROWS_AS(RRGrid({{}, {1.0}, {1.0}, {1.0}}).validate(), DomainError);
  CHECK_THROWS_AS(RRGrid({{0.5}, {2.0, 1.0}, {1.0}, {1.0}}).validate(), DomainError);
  CHECK_THROWS_AS(rr_regime_grid(0.5), DomainError);

  const auto inst = make_instance(10, 5);
  auto bad = inst.nz;
  bad.ids[0] = 9999;
  CHECK_THROWS_AS(rr_impute(inst.data, bad, {}), AlignmentError);

  // Nuisance at the boundary: units flagged, values stay finite.
  auto edge = inst.nz;
  edge.e_hat[0] = 0.0;
  edge.mu1_hat[1] = 1.0;
  const auto imp = rr_impute(inst.data, edge, {0.5, 2.0, 2.0, 2.0});
  CHECK(imp.flagged == 2);
  for (double v : imp.imputed) CHECK(std::isfinite(v));
}
