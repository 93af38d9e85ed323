#include "polsens/trunc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "polsens/errors.hpp"
#include "polsens/policy.hpp"

namespace polsens {

namespace {

constexpr double kTailSwitch = -8.0;

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// For x > 0: phi(x)/Phi(-x) - x = 1 / (x + 2 / (x + 3 / (x + ...))).
double tail_excess(double x) {
  double t = x;
  for (int k = 200; k >= 2; --k) t = x + k / t;
  return 1.0 / t;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void TruncatedNormal::validate() const {
  if (!std::isfinite(theta) || !std::isfinite(s)) throw DomainError("truncated normal: theta and s must be finite");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("truncated normal: sigma must be positive");
}

double inverse_mills_ratio(double b) {
  if (b < kTailSwitch) return -b + tail_excess(-b);
  return norm_pdf(b) / norm_cdf(b);
}

double truncated_mean(const TruncatedNormal& tn) {
  tn.validate();
  return tn.theta - tn.sigma * inverse_mills_ratio(tn.beta());
}

double truncated_var(const TruncatedNormal& tn) {
  tn.validate();
  const double b = tn.beta();
  double scaled;
  if (b < kTailSwitch) {
    // b + r is the tail excess itself; avoids subtracting two numbers near |b|.
    const double d = tail_excess(-b);
    scaled = 1.0 - (-b + d) * d;
  } else {
    const double r = inverse_mills_ratio(b);
    scaled = 1.0 - r * (b + r);
  }
  return tn.sigma * tn.sigma * scaled;
}

MonotonicityReport check_monotonicity(double sigma, double s, std::span<const double> theta_grid,
                                      double fd_step, double rel_tol) {
  if (!std::is_sorted(theta_grid.begin(), theta_grid.end())) {
    throw ValidationError("theta grid must be sorted");
  }
  MonotonicityReport rep;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < theta_grid.size(); ++i) {
    const double th = theta_grid[i];
    const double m = truncated_mean({th, sigma, s});
    if (i > 0 && !(m > prev) && rep.increasing) {
      rep.increasing = false;
      rep.offending_theta = th;
      rep.message = "truncated mean not increasing at theta = " + fmt(th);
    }
    prev = m;

    const double fd = (truncated_mean({th + fd_step, sigma, s}) - truncated_mean({th - fd_step, sigma, s})) /
                      (2.0 * fd_step);
    const double want = truncated_var({th, sigma, s}) / (sigma * sigma);
    const double rel = std::abs(fd - want) / std::abs(want);
    rep.max_relative_error = std::max(rep.max_relative_error, rel);
    if (!(rel <= rel_tol) && rep.derivative_matches) {
      rep.derivative_matches = false;
      if (!rep.offending_theta) rep.offending_theta = th;
      if (!rep.message.empty()) rep.message += "; ";
      rep.message += "derivative " + fmt(fd) + " != var/sigma^2 " + fmt(want) + " at theta = " + fmt(th);
    }
  }
  if (rep.ok()) rep.message = "ok";
  return rep;
}

OrderingReport compare_group_ordering(const TruncatedNormal& a, const TruncatedNormal& b) {
  OrderingReport rep;
  rep.mean_a = truncated_mean(a);
  rep.mean_b = truncated_mean(b);
  rep.inverted = (a.theta < b.theta && rep.mean_a > rep.mean_b) || (a.theta > b.theta && rep.mean_a < rep.mean_b);
  rep.message = rep.inverted ? "truncated means invert the order of the underlying means: " + fmt(rep.mean_a) +
                                   " vs " + fmt(rep.mean_b)
                             : "order preserved";
  return rep;
}

std::pair<TruncatedNormal, TruncatedNormal> unequal_variance_counterexample() {
  return {TruncatedNormal{0.0, 0.5, 0.0}, TruncatedNormal{0.5, 3.0, 0.0}};
}

std::vector<PopulationCell> inverted_ranking_population() {
  return {
      {"young", "man", Rational(4, 10), 1, Rational(2, 10)},
      {"young", "woman", Rational(1, 10), 0, Rational(5, 100)},
      {"old", "man", Rational(4, 10), 0, Rational(1, 10)},
      {"old", "woman", Rational(1, 10), 0, Rational(1, 10)},
  };
}

std::vector<StratumRisk> stratum_risks(std::span<const PopulationCell> cells) {
  std::vector<StratumRisk> out;
  for (const auto& c : cells) {
    if (std::none_of(out.begin(), out.end(), [&](const StratumRisk& r) { return r.observed == c.observed; })) {
      out.push_back({c.observed, Rational(0), std::nullopt});
    }
  }
  for (auto& r : out) {
    Rational all_w(0), all_risk(0), rel_w(0), rel_risk(0);
    for (const auto& c : cells) {
      if (c.observed != r.observed) continue;
      all_w += c.share;
      all_risk += c.share * c.untreated_risk;
      if (c.treated == 0) {
        rel_w += c.share;
        rel_risk += c.share * c.untreated_risk;
      }
    }
    if (all_w == Rational(0)) throw ValidationError("stratum " + r.observed + " has zero share");
    r.true_risk = all_risk / all_w;
    if (rel_w != Rational(0)) r.learned_risk = rel_risk / rel_w;
  }
  return out;
}

SyntheticTruth population_truth(std::span<const PopulationCell> cells, std::size_t n) {
  std::vector<std::string> levels;
  for (const auto& c : cells) {
    if (std::find(levels.begin(), levels.end(), c.observed) == levels.end()) levels.push_back(c.observed);
  }
  if (levels.size() != 2) throw ValidationError("population must have exactly two observed strata");

  std::vector<UnitId> ids;
  std::vector<double> x, t, y, y0, y1;
  GeneratorProbs probs;
  const auto nn = static_cast<long long>(n);
  for (const auto& c : cells) {
    const Rational count = c.share * nn;
    const Rational events = count * c.untreated_risk;
    if (count.denominator() != 1 || events.denominator() != 1) {
      throw ValidationError("population size does not give whole counts for cell " + c.observed + "/" + c.hidden);
    }
    const double level = c.observed == levels[0] ? 0.0 : 1.0;
    const double risk = boost::rational_cast<double>(c.untreated_risk);
    for (long long k = 0; k < count.numerator(); ++k) {
      ids.push_back(static_cast<UnitId>(ids.size() + 1));
      x.push_back(level);
      t.push_back(c.treated);
      const double o = k < events.numerator() ? 1.0 : 0.0;
      y0.push_back(o);
      y1.push_back(0.0);
      y.push_back(c.treated ? 0.0 : o);
      probs.mu0.push_back(risk);
      probs.mu1.push_back(0.0);
      probs.e.push_back(c.treated);
    }
  }
  if (ids.size() != n) throw ValidationError("cell shares do not sum to one");
  Dataset base = Dataset::from_columns({levels[1]}, std::move(ids), {std::move(x)}, std::move(t), std::move(y),
                                       "stratified population");
  return SyntheticTruth{std::move(base), std::move(y0), std::move(y1), std::move(probs), 0};
}

double RankingCurve::max_gap() const {
  double g = 0.0;
  for (std::size_t k = 0; k < learned_value.size(); ++k) g = std::max(g, std::abs(learned_value[k] - oracle_value[k]));
  return g;
}

RankingCurve ranking_robustness(const SyntheticTruth& truth, std::span<const std::string> keep,
                                std::span<const double> quantile_grid, const CvOptions& cv) {
  const Dataset observed = censor(truth, keep);
  const std::vector<UnitId> ids(observed.ids().begin(), observed.ids().end());

  RowSet released;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!observed.treatment_at(i)) released.push_back(i);
  }
  if (released.empty()) throw InsufficientDataError("no released units to learn risk from");
  const GlmFit learned = fit_lasso_logit_cv(observed, Target::kOutcome, released, cv);

  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < observed.width(); ++j) cols.emplace_back(observed.column(j).begin(), observed.column(j).end());
  const Dataset everyone = Dataset::from_columns(observed.schema(), ids, std::move(cols),
                                                 {observed.treatment().begin(), observed.treatment().end()},
                                                 truth.y0, observed.provenance() + " with y0 for all");
  const GlmFit oracle = fit_lasso_logit_cv(everyone, Target::kOutcome, all_rows(everyone), cv);

  RankingCurve curve;
  curve.learned_scores = predict(learned, observed);
  curve.oracle_scores = predict(oracle, everyone);
  const auto ls = make_scores(ids, curve.learned_scores);
  const auto os = make_scores(ids, curve.oracle_scores);
  for (double q : quantile_grid) {
    const Policy pl = Policy::quantile(ls, q);
    const Policy po = Policy::quantile(os, q);
    curve.quantile.push_back(q);
    curve.release_rate.push_back(pl.release_rate());
    curve.learned_value.push_back(oracle_policy_value(truth.y0, truth.y1, pl));
    curve.oracle_value.push_back(oracle_policy_value(truth.y0, truth.y1, po));
  }
  return curve;
}

ResultsTable ranking_table(const RankingCurve& curve) {
  ResultsTable t;
  t.columns = {"quantile", "release_rate", "learned_value", "oracle_value"};
  for (std::size_t k = 0; k < curve.quantile.size(); ++k) {
    t.add_row({curve.quantile[k], curve.release_rate[k], curve.learned_value[k], curve.oracle_value[k]});
  }
  return t;
}

}  // namespace polsens
