#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "polsens/errors.hpp"
#include "polsens/policy.hpp"
#include "polsens/trunc.hpp"

using namespace polsens;

namespace {

double direct_ratio(double b) {
  const double pdf = std::exp(-0.5 * b * b) / std::sqrt(2.0 * std::numbers::pi);
  return pdf / (0.5 * std::erfc(-b / std::numbers::sqrt2));
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int k = 0; k <= n; ++k) g.push_back(lo + k * step);
  return g;
}

}  // namespace

TEST_CASE("half-normal and untruncated limits") {
  CHECK(std::abs(truncated_mean({0.0, 1.0, 0.0}) + std::sqrt(2.0 / std::numbers::pi)) <= 1e-12);
  CHECK(std::abs(truncated_var({0.0, 1.0, 0.0}) - (1.0 - 2.0 / std::numbers::pi)) <= 1e-12);
  for (double theta : {-3.0, 0.0, 2.5}) {
    for (double sigma : {0.1, 1.0, 7.0}) {
      const TruncatedNormal tn{theta, sigma, theta + 40.0 * sigma};
      CHECK(std::abs(truncated_mean(tn) - theta) <= 1e-12);
      CHECK(std::abs(truncated_var(tn) - sigma * sigma) <= 1e-12 * sigma * sigma);
    }
  }
  // Location-scale: shifting everything shifts the mean; scaling scales it.
  CHECK(truncated_mean({3.0, 2.0, 4.0}) == doctest::Approx(3.0 + 2.0 * truncated_mean({0.0, 1.0, 0.5})).epsilon(1e-14));
  CHECK_THROWS_AS(truncated_mean({0.0, 0.0, 0.0}), DomainError);
  CHECK_THROWS_AS(truncated_var({0.0, -1.0, 0.0}), DomainError);
}

TEST_CASE("moments agree with rejection sampling") {
  const TruncatedNormal tn{1.0, 2.0, 0.5};
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> z(tn.theta, tn.sigma);
  double sum = 0.0, sum2 = 0.0;
  std::size_t kept = 0;
  for (std::size_t k = 0; k < 10'000'000; ++k) {
    const double r = z(rng);
    if (r < tn.s) {
      sum += r;
      sum2 += r * r;
      ++kept;
    }
  }
  const double n = static_cast<double>(kept);
  const double mc_mean = sum / n;
  const double mc_var = sum2 / n - mc_mean * mc_mean;
  const double se = std::sqrt(mc_var / n);
  CHECK(std::abs(mc_mean - truncated_mean(tn)) <= 3.0 * se);
  CHECK(std::abs(mc_var - truncated_var(tn)) <= 0.01 * truncated_var(tn));
}

TEST_CASE("tail ratio agrees with the direct ratio and stays stable") {
  for (double b : {-8.0000001, -8.5, -10.0, -15.0, -25.0, -35.0}) {
    CHECK(inverse_mills_ratio(b) == doctest::Approx(direct_ratio(b)).epsilon(1e-12));
  }
  // No jump across the switch point.
  CHECK(inverse_mills_ratio(-8.0 - 1e-12) == doctest::Approx(inverse_mills_ratio(-8.0)).epsilon(1e-11));

  // Deep tail: beta from 0 down to -40 with s = 0, sigma = 1.
  double prev = -std::numeric_limits<double>::infinity();
  for (double theta : grid(0.0, 40.0, 0.01)) {
    const TruncatedNormal tn{theta, 1.0, 0.0};
    const double m = truncated_mean(tn);
    const double v = truncated_var(tn);
    REQUIRE(std::isfinite(m));
    REQUIRE(std::isfinite(v));
    CHECK(m > prev);
    CHECK(m < tn.s);
    CHECK(v > 0.0);
    // Var of the truncated tail is below 1/beta^2.
    if (theta > 1.0) CHECK(v < 1.0 / (theta * theta));
    prev = m;
  }
  CHECK(truncated_mean({40.0, 1.0, 0.0}) == doctest::Approx(-1.0 / 40.0).epsilon(2e-3));
}

TEST_CASE("equal-spread monotonicity and derivative identity") {
  const auto g = grid(-5.0, 5.0, 0.1);
  const auto rep = check_monotonicity(1.0, 0.0, g);
  CHECK(rep.ok());
  CHECK(rep.max_relative_error < 1e-6);
  CHECK_FALSE(rep.offending_theta.has_value());

  for (double sigma : {0.3, 2.0}) {
    for (double s : {-2.0, 1.5}) {
      CHECK(check_monotonicity(sigma, s, g).ok());
    }
  }

  // At theta = 0, sigma = 1, s = 0 the slope is 1 - r^2 with r = phi(0)/Phi(0).
  const double r = 2.0 * (1.0 / std::sqrt(2.0 * std::numbers::pi));
  CHECK(r == doctest::Approx(0.79788456).epsilon(1e-8));
  CHECK(truncated_var({0.0, 1.0, 0.0}) == doctest::Approx(1.0 - r * r).epsilon(1e-14));
  CHECK(1.0 - r * r == doctest::Approx(0.36338).epsilon(1e-5));

  // An impossible tolerance produces a failing report naming a theta.
  const auto strict = check_monotonicity(1.0, 0.0, g, 1e-6, 1e-15);
  CHECK_FALSE(strict.ok());
  REQUIRE(strict.offending_theta.has_value());
  CHECK(strict.message.find("theta =") != std::string::npos);

  const std::vector<double> unsorted{0.0, -1.0};
  CHECK_THROWS_AS(check_monotonicity(1.0, 0.0, unsorted), ValidationError);
}

TEST_CASE("unequal spreads can invert the ordering") {
  const auto [low, high] = unequal_variance_counterexample();
  REQUIRE(low.theta < high.theta);
  REQUIRE(low.sigma < high.sigma);
  const auto rep = compare_group_ordering(low, high);
  CHECK(rep.inverted);
  CHECK(rep.mean_a > rep.mean_b);
  CHECK(rep.message.find("invert") != std::string::npos);

  // Same spread, same truncation: never inverted.
  CHECK_FALSE(compare_group_ordering({low.theta, high.sigma, 0.0}, high).inverted);
  CHECK_FALSE(compare_group_ordering(low, {high.theta, low.sigma, 0.0}).inverted);
}

TEST_CASE("four-cell population in exact arithmetic") {
  const auto cells = inverted_ranking_population();
  double total = 0.0;
  for (const auto& c : cells) total += boost::rational_cast<double>(c.share);
  CHECK(total == 1.0);
  const auto risks = stratum_risks(cells);
  REQUIRE(risks.size() == 2);
  const auto& young = risks[0].observed == "young" ? risks[0] : risks[1];
  const auto& old = risks[0].observed == "old" ? risks[0] : risks[1];
  CHECK(young.true_risk == Rational(17, 100));
  CHECK(old.true_risk == Rational(1, 10));
  REQUIRE(young.learned_risk);
  REQUIRE(old.learned_risk);
  CHECK(*young.learned_risk == Rational(1, 20));
  CHECK(*old.learned_risk == Rational(1, 10));
  // True order: young riskier. Learned from released units: old riskier.
  CHECK(young.true_risk > old.true_risk);
  CHECK(*young.learned_risk < *old.learned_risk);

  // A stratum with no released units has no learned risk.
  std::vector<PopulationCell> all_detained{{"a", "", Rational(1, 2), 1, Rational(1, 5)},
                                           {"b", "", Rational(1, 2), 0, Rational(1, 5)}};
  CHECK_FALSE(stratum_risks(all_detained)[0].learned_risk.has_value());
}

TEST_CASE("four-cell population as a dataset: learned ranking inverts, oracle does not") {
  const auto cells = inverted_ranking_population();
  CHECK_THROWS_AS(population_truth(cells, 30), ValidationError);
  const auto truth = population_truth(cells, 20000);
  REQUIRE(truth.size() == 20000);
  const std::vector<std::string> keep{"old"};
  const std::vector<double> q{0.0, 0.5, 1.0};
  const auto curve = ranking_robustness(truth, keep, q);

  const auto old_col = truth.base.column("old");
  double learned_young = 0, learned_old = 0, oracle_young = 0, oracle_old = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    (old_col[i] ? learned_old : learned_young) = curve.learned_scores[i];
    (old_col[i] ? oracle_old : oracle_young) = curve.oracle_scores[i];
  }
  CHECK(learned_old > learned_young);
  CHECK(oracle_young > oracle_old);
  CHECK(learned_young == doctest::Approx(0.05).epsilon(0.05));
  CHECK(oracle_young == doctest::Approx(0.17).epsilon(0.05));

  // Releasing half: learned picks the young (true risk 0.17), oracle the old (0.10).
  CHECK(curve.learned_value[1] == doctest::Approx(0.5 * 0.17).epsilon(1e-12));
  CHECK(curve.oracle_value[1] == doctest::Approx(0.5 * 0.10).epsilon(1e-12));
  CHECK(curve.learned_value[2] == curve.oracle_value[2]);
  CHECK(curve.learned_value[0] == 0.0);
}

TEST_CASE("quantile policies are invariant to monotone score transforms") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50 + trial * 37;
    std::vector<UnitId> ids(n);
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = static_cast<UnitId>(3 * i + 1);
      // Coarse values force ties, which must also be broken identically.
      raw[i] = trial % 2 ? std::round(u(rng) * 20.0) / 20.0 : u(rng);
    }
    const auto base = make_scores(ids, raw);
    const std::vector<std::function<double(double)>> transforms{
        [](double x) { return std::sqrt(x); }, [](double x) { return x * x * x; },
        [](double x) { return std::expm1(x) / std::expm1(1.0); }, [](double x) { return 0.2 + 0.5 * x; }};
    for (const auto& f : transforms) {
      std::vector<double> moved(n);
      for (std::size_t i = 0; i < n; ++i) moved[i] = f(raw[i]);
      const auto other = make_scores(ids, moved);
      for (int k = 0; k <= 20; ++k) {
        const double p = k / 20.0;
        const auto a = Policy::quantile(base, p);
        const auto b = Policy::quantile(other, p);
        CHECK(std::equal(a.decisions().begin(), a.decisions().end(), b.decisions().begin()));
      }
    }
  }
}

TEST_CASE("learned policies track oracle policies on the full schema") {
  const auto truth = generate_truth(ScenarioSpec::paper_default(), 21);
  const auto keep = truth.base.schema();
  std::vector<double> q;
  for (int k = 0; k <= 20; ++k) q.push_back(k / 20.0);
  const auto curve = ranking_robustness(truth, keep, q);
  CHECK(curve.max_gap() <= 0.02);
  CHECK(curve.learned_value.back() == curve.oracle_value.back());
  CHECK(curve.release_rate.back() == 1.0);
  const auto table = ranking_table(curve);
  CHECK(table.columns == std::vector<std::string>{"quantile", "release_rate", "learned_value", "oracle_value"});
  CHECK(table.rows.size() == q.size());
}
