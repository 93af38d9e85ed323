#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "doctest.h"
#include "polsens/confound.hpp"
#include "polsens/errors.hpp"

using namespace polsens;

namespace {

double log_phi(double x) { return -0.5 * std::log(2 * std::numbers::pi) - 0.5 * x * x; }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double bernoulli_ll(double y, double eta) { return y * eta - softplus(eta); }

struct Instance {
  Dataset data;
  NuisanceEstimates nz;
};

// Units whose nuisance predictions are given and whose treatment and outcome
// are drawn from them, i.e. data consistent with an ignorable model.
Instance ignorable_instance(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CaseRecord> recs(n);
  NuisanceEstimates nz;
  for (std::size_t i = 0; i < n; ++i) {
    const double m0 = 0.05 + 0.4 * u(rng);
    const double m1 = 0.6 * m0 + 0.02;
    const double e = 0.15 + 0.5 * u(rng);
    recs[i].id = static_cast<UnitId>(i + 1);
    recs[i].covariates = {m0};
    recs[i].treatment = u(rng) < e;
    recs[i].outcome = u(rng) < (recs[i].treatment ? m1 : m0);
    nz.ids.push_back(recs[i].id);
    nz.mu0_hat.push_back(m0);
    nz.mu1_hat.push_back(m1);
    nz.e_hat.push_back(e);
  }
  return {Dataset({"risk"}, recs), nz};
}

std::vector<double> random_point(const ConfoundModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> q(m.dimension());
  for (auto& v : q) v = u(rng);
  return q;
}

}  // namespace

TEST_CASE("risk bins") {
  const std::vector<UnitId> ids{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  const std::vector<double> s{0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.05};
  SUBCASE("one bin") {
    const auto b = bin_by_risk(s, ids, 1);
    for (auto g : b.group) CHECK(g == 0);
  }
  SUBCASE("floor-remainder sizes and sorted blocks") {
    const auto b = bin_by_risk(s, ids, 3);
    CHECK(b.sizes == std::vector<std::size_t>{4, 3, 3});
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (b.group[i] < b.group[j]) CHECK(s[i] <= s[j]);
      }
    }
    // lowest four scores: 0.05, 0.1, 0.2, 0.3
    CHECK(b.group[9] == 0);
    CHECK(b.group[3] == 0);
    CHECK(b.group[7] == 1);
  }
  SUBCASE("ties go by id") {
    const std::vector<double> flat(4, 0.2);
    const std::vector<UnitId> tid{4, 2, 3, 1};
    const auto b = bin_by_risk(flat, tid, 2);
    CHECK(b.group == std::vector<std::size_t>{1, 0, 1, 0});
  }
  SUBCASE("more bins than units") { CHECK_THROWS_AS(bin_by_risk(s, ids, 11), DomainError); }
  SUBCASE("random sizes differ by at most one") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t n : {7u, 50u, 333u}) {
      std::vector<double> sc(n);
      std::vector<UnitId> id(n);
      for (std::size_t i = 0; i < n; ++i) {
        sc[i] = u(rng);
        id[i] = static_cast<UnitId>(i);
      }
      for (std::size_t K : {1u, 2u, 5u, 7u}) {
        const auto b = bin_by_risk(sc, id, K);
        const auto [lo, hi] = std::minmax_element(b.sizes.begin(), b.sizes.end());
        CHECK(*hi - *lo <= 1);
        CHECK(std::accumulate(b.sizes.begin(), b.sizes.end(), std::size_t{0}) == n);
      }
    }
  }
}

TEST_CASE("random-walk prior densities") {
  const std::vector<double> x{0.0, 1.0};
  CHECK(random_walk_lpdf(x, 1.0, {}, nullptr) == doctest::Approx(log_phi(0.0) + log_phi(1.0)).epsilon(1e-15));

  // The positive walk is a proper density on (0, inf)^2.
  const double h = 0.004;
  double mass = 0.0;
  for (double a = h / 2; a < 9.0; a += h) {
    for (double b = h / 2; b < 12.0; b += h) {
      const std::vector<double> p{a, b};
      mass += std::exp(positive_random_walk_lpdf(p, 0.7, {}, nullptr)) * h * h;
    }
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));

  // Gradients by central differences.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(5);
    for (auto& a : v) a = u(rng);
    const double tau = u(rng);
    for (bool positive : {false, true}) {
      auto f = [&](const std::vector<double>& xx, double t) {
        return positive ? positive_random_walk_lpdf(xx, t, {}, nullptr) : random_walk_lpdf(xx, t, {}, nullptr);
      };
      std::vector<double> gx(5, 0.0);
      double gt = 0.0;
      if (positive) {
        positive_random_walk_lpdf(v, tau, gx, &gt);
      } else {
        random_walk_lpdf(v, tau, gx, &gt);
      }
      const double e = 1e-6;
      for (std::size_t j = 0; j < 5; ++j) {
        auto a = v, b = v;
        a[j] += e;
        b[j] -= e;
        CHECK(gx[j] == doctest::Approx((f(a, tau) - f(b, tau)) / (2 * e)).epsilon(1e-6));
      }
      CHECK(gt == doctest::Approx((f(v, tau + e) - f(v, tau - e)) / (2 * e)).epsilon(1e-6));
    }
  }
}

TEST_CASE("one bin with u = 0 reduces to three logistic regressions") {
  const auto inst = ignorable_instance(60, 3);
  const auto bins = bin_by_risk(inst.nz.mu0_hat, inst.data.ids(), 1);
  const ConfoundModel model(inst.data, inst.nz, bins, {});
  ConfoundParams p;
  const double a[kChainCount] = {-1.2, 2.0, 0.3, -0.7, 1.5, 0.8, 0.4, -0.9, 1.1};
  for (std::size_t c = 0; c < kChainCount; ++c) {
    p.coef[c] = {a[c]};
    p.tau[c] = 1.0;
  }
  p.u.assign(60, 0.0);
  const auto q = model.pack(p);
  std::vector<double> g(q.size());
  double want = 0.0;
  for (std::size_t i = 0; i < 60; ++i) {
    const double t = inst.data.treatment()[i], y = inst.data.outcome()[i];
    want += bernoulli_ll(t, a[kAssignIntercept] + a[kAssignSlope] * inst.nz.e_hat[i]);
    want += t ? bernoulli_ll(y, a[kTreatedIntercept] + a[kTreatedSlope] * inst.nz.mu1_hat[i])
              : bernoulli_ll(y, a[kUntreatedIntercept] + a[kUntreatedSlope] * inst.nz.mu0_hat[i]);
  }
  CHECK(std::abs(model.log_likelihood(q, g) - want) < 1e-10);
}

TEST_CASE("prior-only evaluation with no data rows") {
  const Dataset empty({"x"}, std::vector<CaseRecord>{});
  NuisanceEstimates nz;
  BinAssignment bins;
  bins.K = 2;
  bins.sizes = {0, 0};
  SensitivitySpec spec;
  spec.coordinates = ChainCoordinates::kCentered;
  const ConfoundModel model(empty, nz, bins, spec);
  ConfoundParams p;
  for (std::size_t c = 0; c < kChainCount; ++c) {
    p.coef[c] = {0.5, 0.5};
    p.tau[c] = 1.0;
  }
  const auto q0 = model.pack(p);
  p.coef[kUntreatedIntercept] = {0.0, 1.0};
  const auto q1 = model.pack(p);
  std::vector<double> g(q0.size());
  // Only the changed chain's contribution differs.
  const double d = model.log_prior(q1, g) - model.log_prior(q0, g);
  const double want = (log_phi(0.0) + log_phi(1.0)) - (log_phi(0.5) + log_phi(0.0));
  CHECK(d == doctest::Approx(want).epsilon(1e-14));
  CHECK(model.log_likelihood(q1, g) == 0.0);
}

TEST_CASE("log posterior gradient matches finite differences") {
  std::mt19937_64 rng(12);
  for (std::size_t n : {10u, 200u}) {
    for (std::size_t K : {1u, 3u, 10u}) {
      const auto inst = ignorable_instance(n, n * 31 + K);
      const auto bins = bin_by_risk(inst.nz.mu0_hat, inst.data.ids(), K);
      for (int mode = 0; mode < 4; ++mode) {
        SensitivitySpec spec;
        spec.sigma_tau = 0.8;
        spec.pin_loadings = mode == 3;
        spec.coordinates = mode == 0   ? ChainCoordinates::kCentered
                           : mode == 1 ? ChainCoordinates::kLoadingsNonCentered
                                       : ChainCoordinates::kNonCentered;
        const ConfoundModel model(inst.data, inst.nz, bins, spec);
        const auto dens = model.density();
        for (int trial = 0; trial < 20; ++trial) {
          const auto q = random_point(model, rng);
          CAPTURE(n);
          CAPTURE(K);
          CHECK(check_gradient(dens, q).max_error < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("non-centred walk transforms") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(6);
    for (auto& a : v) a = 2.5 * z(rng);
    const double tau = u(rng);
    double log_jac = 0.0;
    const auto x = positive_walk_from_normals(v, tau, &log_jac);
    double std_normal = 0.0;
    for (double a : v) std_normal += log_phi(a);
    for (double a : x) CHECK(a > 0.0);
    // Change of variables: the pushforward of iid N(0,1) is the truncated walk.
    CHECK(positive_random_walk_lpdf(x, tau, {}, nullptr) + log_jac == doctest::Approx(std_normal).epsilon(1e-9));
    const auto back = positive_walk_to_normals(x, tau);
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(back[k] == doctest::Approx(v[k]).epsilon(1e-8));
  }
}

TEST_CASE("coordinate systems describe the same posterior") {
  const auto inst = ignorable_instance(60, 8);
  const auto bins = bin_by_risk(inst.nz.mu0_hat, inst.data.ids(), 4);
  SensitivitySpec centred_spec, nc_spec;
  centred_spec.coordinates = ChainCoordinates::kCentered;
  nc_spec.coordinates = ChainCoordinates::kNonCentered;
  const ConfoundModel centred(inst.data, inst.nz, bins, centred_spec);
  const ConfoundModel nc(inst.data, inst.nz, bins, nc_spec);
  std::mt19937_64 rng(10);
  std::vector<double> g(nc.dimension());
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_point(nc, rng);
    const auto p = nc.unpack(q);
    const auto qc = centred.pack(p);
    // log p_nc(q) = log p_c(qc) + log |d qc / d q|, chain by chain.
    double log_jac = 0.0;
    for (std::size_t c = 0; c < kChainCount; ++c) {
      const std::span<const double> v(q.data() + nc.chain_offset(c), nc.K());
      if (is_loading(c)) {
        double lj = 0.0;
        positive_walk_from_normals(v, p.tau[c], &lj);
        log_jac += lj;
        for (double x : p.coef[c]) log_jac -= std::log(x);
      } else {
        log_jac += static_cast<double>(nc.K() - 1) * std::log(p.tau[c]);
      }
    }
    const double lhs = nc.log_posterior(q, g);
    const double rhs = centred.log_posterior(qc, g) + log_jac;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    std::vector<double> cf_a(60), cf_b(60);
    nc.counterfactual(q, cf_a);
    centred.counterfactual(qc, cf_b);
    for (std::size_t i = 0; i < 60; ++i) CHECK(cf_a[i] == doctest::Approx(cf_b[i]).epsilon(1e-10));
  }
}

TEST_CASE("pack, unpack and counterfactual probabilities") {
  const auto inst = ignorable_instance(40, 4);
  const auto bins = bin_by_risk(inst.nz.mu0_hat, inst.data.ids(), 3);
  std::mt19937_64 rng(5);
  for (auto coords : {ChainCoordinates::kCentered, ChainCoordinates::kLoadingsNonCentered,
                      ChainCoordinates::kNonCentered}) {
  SensitivitySpec spec;
  spec.coordinates = coords;
  const ConfoundModel model(inst.data, inst.nz, bins, spec);
  const auto q = random_point(model, rng);
  const auto p = model.unpack(q);
  const auto back = model.pack(p);
  REQUIRE(back.size() == q.size());
  for (std::size_t j = 0; j < q.size(); ++j) CHECK(back[j] == doctest::Approx(q[j]).epsilon(1e-9));
  for (std::size_t c = 0; c < kChainCount; ++c) {
    if (is_loading(c)) {
      for (double v : p.coef[c]) CHECK(v > 0.0);
    }
    CHECK(p.tau[c] > 0.0);
  }
  std::vector<double> cf(40);
  model.counterfactual(q, cf);
  for (std::size_t i = 0; i < 40; ++i) {
    const std::size_t k = bins.group[i];
    const bool treated = inst.data.treatment_at(i);
    const double eta = treated ? p.coef[kUntreatedIntercept][k] + p.coef[kUntreatedSlope][k] * inst.nz.mu0_hat[i] +
                                     p.coef[kUntreatedLoading][k] * p.u[i]
                               : p.coef[kTreatedIntercept][k] + p.coef[kTreatedSlope][k] * inst.nz.mu1_hat[i] +
                                     p.coef[kTreatedLoading][k] * p.u[i];
    CHECK(cf[i] == doctest::Approx(1.0 / (1.0 + std::exp(-eta))).epsilon(1e-13));
  }
  }
}

TEST_CASE("posterior functionals on hand-built draws") {
  SUBCASE("three units, one draw") {
    // Units 1, 2 agree with the policy (outcomes 1, 0); unit 3 disagrees.
    const CounterfactualDraws cf({1, 2, 3}, {1, 0, 0}, {1, 0, 1}, 1, {0.9, 0.9, 0.25});
    const Policy pi = Policy::from_decisions({1, 2, 3}, {1, 0, 1});
    const auto v = cf.policy_value(pi);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == doctest::Approx(1.25 / 3.0).epsilon(1e-15));
  }
  SUBCASE("observed policy is a point mass") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    const std::size_t n = 50, S = 30;
    std::vector<UnitId> ids(n);
    std::vector<double> t(n), y(n), vals(n * S);
    std::vector<std::uint8_t> dec(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = static_cast<UnitId>(i);
      t[i] = u(rng) < 0.4;
      y[i] = u(rng) < 0.3;
      dec[i] = t[i] != 0.0;
    }
    for (auto& v : vals) v = u(rng);
    const CounterfactualDraws cf(ids, t, y, S, vals);
    const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / n;
    for (double v : cf.policy_value(Policy::from_decisions(ids, dec))) CHECK(v == mean_y);

    // A single-unit group recovers that unit's effect in every draw.
    for (std::size_t i : {3u, 17u}) {
      std::vector<std::uint8_t> g(n, 0);
      g[i] = 1;
      const auto ate = cf.subgroup_ate(g);
      for (std::size_t s = 0; s < S; ++s) {
        const double y1 = t[i] ? y[i] : cf.value(s, i);
        const double y0 = t[i] ? cf.value(s, i) : y[i];
        CHECK(ate[s] == doctest::Approx(y1 - y0).epsilon(1e-12));
      }
    }
    CHECK_THROWS_AS(cf.subgroup_ate(std::vector<std::uint8_t>(n, 0)), EmptyGroupError);
  }
}

TEST_CASE("ignorable model agrees with the direct estimator") {
  const auto inst = ignorable_instance(500, 21);
  SensitivitySpec spec;
  spec.K = 5;
  spec.pin_loadings = true;
  spec.sampler.chains = 2;
  spec.sampler.warmup = 400;
  spec.sampler.draws = 400;
  spec.sampler.seed = 8;
  const auto fit = fit_sensitivity(inst.data, inst.nz, spec);
  CHECK_FALSE(fit.rhat_flag);
  const ConfoundModel model(inst.data, inst.nz, fit.bins, spec);
  const auto cf = CounterfactualDraws::from_posterior(model, inst.data, fit.draws);
  const auto scores = make_scores({inst.data.ids().begin(), inst.data.ids().end()}, inst.nz.mu0_hat);
  for (double s : {0.1, 0.2, 0.3, 0.4}) {
    const Policy pi = Policy::absolute(scores, s);
    const auto band = summarize(cf.policy_value(pi));
    const double direct = direct_policy_value(inst.data, pi, inst.nz).value;
    CAPTURE(s);
    CHECK(std::abs(band.q50 - direct) <= 2 * band.sd);
  }
  for (std::size_t s = 0; s < fit.draws.chains * fit.draws.iterations; ++s) {
    const std::span<const double> q(fit.draws.values.data() + s * fit.draws.dimension, fit.draws.dimension);
    const auto p = model.unpack(q);
    for (double t : p.tau) CHECK(t > 0.0);
  }
}

TEST_CASE("band summaries") {
  std::vector<double> x(101);
  std::iota(x.begin(), x.end(), 0.0);
  const auto b = summarize(x);
  CHECK(b.q025 == doctest::Approx(2.5));
  CHECK(b.q50 == 50.0);
  CHECK(b.q975 == doctest::Approx(97.5));
  CHECK(sample_quantile(x, 0.25) == 25.0);
}
