#include "polsens/rr.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <boost/math/tools/roots.hpp>

#include "polsens/errors.hpp"
#include "polsens/kernels.hpp"

namespace polsens {
namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

// Pr(u = 1 | observation) from prior w and the two likelihoods.
double bayes(double w, double like0, double like1) {
  const double a = w * like1;
  return a / (a + (1.0 - w) * like0);
}

double bernoulli_like(double prob, int y) { return y ? prob : 1.0 - prob; }

double mix(double r, double lo, double hi) { return (1.0 - r) * lo + r * hi; }

void check_sorted_grid(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw DomainError(std::string("empty sensitivity grid: ") + what);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DomainError(std::string("non-finite grid value: ") + what);
    if (i && v[i] <= v[i - 1]) throw DomainError(std::string("grid not strictly increasing: ") + what);
  }
}

std::vector<double> sorted_union(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

}  // namespace

void RRParams::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("confounder prevalence must lie in (0, 1)");
  if (!(gamma >= 1.0) || !(delta0 >= 1.0) || !(delta1 >= 1.0) || !std::isfinite(gamma) ||
      !std::isfinite(delta0) || !std::isfinite(delta1)) {
    throw DomainError("odds multipliers must be finite and at least 1");
  }
}

void RRGrid::validate() const {
  check_sorted_grid(p_values, "prevalence");
  check_sorted_grid(gamma_values, "treatment multiplier");
  check_sorted_grid(delta0_values, "untreated outcome multiplier");
  check_sorted_grid(delta1_values, "treated outcome multiplier");
  for (double p : p_values) RRParams{p, 1.0, 1.0, 1.0}.validate();
  for (const auto* v : {&gamma_values, &delta0_values, &delta1_values}) {
    for (double m : *v) RRParams{0.5, m, 1.0, 1.0}.validate();
  }
}

RRGrid rr_regime_grid(double cap, std::size_t points) {
  if (!(cap >= 1.0) || !std::isfinite(cap)) throw DomainError("regime cap must be at least 1");
  if (points == 0) throw DomainError("regime grid needs at least one multiplier");
  RRGrid g;
  for (int k = 1; k <= 9; ++k) g.p_values.push_back(k / 10.0);
  std::vector<double> m;
  if (points == 1 || cap == 1.0) {
    m = {1.0};
  } else {
    for (std::size_t j = 0; j < points; ++j) {
      m.push_back(j + 1 == points ? cap : std::pow(cap, static_cast<double>(j) / (points - 1)));
    }
  }
  g.gamma_values = g.delta0_values = g.delta1_values = m;
  return g;
}

RRGrid merge_grids(const RRGrid& a, const RRGrid& b) {
  return {sorted_union(a.p_values, b.p_values), sorted_union(a.gamma_values, b.gamma_values),
          sorted_union(a.delta0_values, b.delta0_values),
          sorted_union(a.delta1_values, b.delta1_values)};
}

std::vector<RRGrid> default_regimes() {
  const RRGrid doubled = rr_regime_grid(2.0);
  return {doubled, merge_grids(doubled, rr_regime_grid(3.0))};
}

double mixture_probability(double intercept, double log_effect, double w) {
  return mix(w, logistic(intercept), logistic(intercept + log_effect));
}

double calibrate_intercept(double target, double log_effect, double w, bool* flagged) {
  if (!(target >= kProbabilityClamp && target <= 1.0 - kProbabilityClamp)) {
    if (flagged) *flagged = true;
    target = std::isnan(target) ? 0.5 : std::clamp(target, kProbabilityClamp, 1.0 - kProbabilityClamp);
  }
  const double c = logit(target);
  if (log_effect == 0.0 || w == 0.0) return c;
  if (w == 1.0) return c - log_effect;
  // The mixture lies between logistic(c) and logistic(c + L), so the root is in [c - L, c].
  auto f = [&](double x) { return mixture_probability(x, log_effect, w) - target; };
  double lo = c - log_effect, hi = c;
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (flo > 0.0 || fhi < 0.0) {
    if (flagged) *flagged = true;
    return std::abs(flo) < std::abs(fhi) ? lo : hi;
  }
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                   boost::math::tools::eps_tolerance<double>(), iters);
  return 0.5 * (r.first + r.second);
}

RRUnit rr_calibrate_unit(double e_hat, double mu0_hat, double mu1_hat, int t, int y,
                         const RRParams& params) {
  RRUnit u;
  const double lg = std::log(params.gamma);
  const double ld[2] = {std::log(params.delta0), std::log(params.delta1)};
  const double mu[2] = {mu0_hat, mu1_hat};
  u.assign_intercept = calibrate_intercept(e_hat, lg, params.p, &u.flagged);
  const double treat0 = logistic(u.assign_intercept), treat1 = logistic(u.assign_intercept + lg);
  u.u_given_t[1] = bayes(params.p, treat0, treat1);
  u.u_given_t[0] = bayes(params.p, 1.0 - treat0, 1.0 - treat1);
  for (int a = 0; a < 2; ++a) {
    u.outcome_intercept[a] = calibrate_intercept(mu[a], ld[a], u.u_given_t[a], &u.flagged);
  }
  const double b = u.outcome_intercept[t];
  u.u_posterior = bayes(u.u_given_t[t], bernoulli_like(logistic(b), y),
                        bernoulli_like(logistic(b + ld[t]), y));
  const double bm = u.outcome_intercept[1 - t];
  u.imputed = mix(u.u_posterior, logistic(bm), logistic(bm + ld[1 - t]));
  return u;
}

RRImputation rr_impute(const Dataset& d, const NuisanceEstimates& nz, const RRParams& params) {
  params.validate();
  check_aligned(d, nz);
  RRImputation out;
  out.imputed.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto u = rr_calibrate_unit(nz.e_hat[i], nz.mu0_hat[i], nz.mu1_hat[i], d.treatment_at(i),
                                     d.outcome_at(i), params);
    out.imputed[i] = u.imputed;
    out.flagged += u.flagged;
  }
  return out;
}

double rr_adjusted_value(const Dataset& d, const NuisanceEstimates& nz, const Policy& pi,
                         const RRParams& params) {
  check_aligned(d, pi);
  const auto imp = rr_impute(d, nz, params);
  const auto y = d.outcome();
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    s += pi.treats(i) == (d.treatment_at(i) != 0) ? y[i] : imp.imputed[i];
  }
  return d.size() ? s / static_cast<double>(d.size()) : 0.0;
}

// The sweep factors the per-unit work: the assignment intercept depends on
// (p, gamma) only, and each outcome intercept additionally on its own delta.
// Arithmetic mirrors rr_calibrate_unit step for step.
std::vector<RREnvelope> rr_sweep(const Dataset& d, const NuisanceEstimates& nz,
                                 const std::vector<Policy>& policies, const RRGrid& grid,
                                 unsigned threads) {
  grid.validate();
  check_aligned(d, nz);
  for (const auto& pi : policies) check_aligned(d, pi);
  const std::size_t n = d.size(), P = policies.size();
  const std::size_t nd0 = grid.delta0_values.size(), nd1 = grid.delta1_values.size();
  const std::size_t tasks = grid.p_values.size() * grid.gamma_values.size();
  const std::size_t per_task = nd0 * nd1;

  // Per policy: observed outcomes of agreeing units, and a 0/1 mask of disagreeing units.
  std::vector<double> agree_sum(P, 0.0);
  std::vector<std::vector<double>> disagree(P, std::vector<double>(n));
  const auto y = d.outcome();
  for (std::size_t k = 0; k < P; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool agree = policies[k].treats(i) == (d.treatment_at(i) != 0);
      if (agree) agree_sum[k] += y[i];
      disagree[k][i] = agree ? 0.0 : 1.0;
    }
  }

  std::vector<double> values(tasks * per_task * P);
  std::vector<std::size_t> flags(tasks * per_task);

  auto run = [&](std::size_t task) {
    const double p = grid.p_values[task / grid.gamma_values.size()];
    const double lg = std::log(grid.gamma_values[task % grid.gamma_values.size()]);
    std::vector<double> w0(n), w1(n);
    std::vector<std::uint8_t> flag_a(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      bool f = false;
      const double a = calibrate_intercept(nz.e_hat[i], lg, p, &f);
      flag_a[i] = f;
      const double treat0 = logistic(a), treat1 = logistic(a + lg);
      w1[i] = bayes(p, treat0, treat1);
      w0[i] = bayes(p, 1.0 - treat0, 1.0 - treat1);
    }
    // Arm a: posterior of u for units observed in a, and the two outcome
    // probabilities used to impute a for units observed in the other arm.
    struct ArmTables {
      std::vector<double> post, lo, hi;
      std::vector<std::uint8_t> flag;
    };
    auto arm_tables = [&](int arm, double delta) {
      const double ld = std::log(delta);
      const auto& w = arm ? w1 : w0;
      const auto& mu = arm ? nz.mu1_hat : nz.mu0_hat;
      ArmTables tab{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                    std::vector<std::uint8_t>(n, 0)};
      for (std::size_t i = 0; i < n; ++i) {
        bool f = false;
        const double b = calibrate_intercept(mu[i], ld, w[i], &f);
        tab.flag[i] = f;
        const double s0 = logistic(b), s1 = logistic(b + ld);
        if (d.treatment_at(i) == arm) {
          const int yi = d.outcome_at(i);
          tab.post[i] = bayes(w[i], bernoulli_like(s0, yi), bernoulli_like(s1, yi));
        } else {
          tab.lo[i] = s0;
          tab.hi[i] = s1;
        }
      }
      return tab;
    };
    std::vector<ArmTables> arm0, arm1;
    for (double v : grid.delta0_values) arm0.push_back(arm_tables(0, v));
    for (double v : grid.delta1_values) arm1.push_back(arm_tables(1, v));

    std::vector<double> imputed(n);
    for (std::size_t j0 = 0; j0 < nd0; ++j0) {
      for (std::size_t j1 = 0; j1 < nd1; ++j1) {
        const auto& A0 = arm0[j0];
        const auto& A1 = arm1[j1];
        std::size_t flagged = 0;
        for (std::size_t i = 0; i < n; ++i) {
          imputed[i] = d.treatment_at(i) ? mix(A1.post[i], A0.lo[i], A0.hi[i])
                                         : mix(A0.post[i], A1.lo[i], A1.hi[i]);
          flagged += (flag_a[i] | A0.flag[i] | A1.flag[i]) != 0;
        }
        const std::size_t point = task * per_task + j0 * nd1 + j1;
        flags[point] = flagged;
        for (std::size_t k = 0; k < P; ++k) {
          values[point * P + k] =
              n ? (agree_sum[k] + kernels::dot(disagree[k], imputed)) / static_cast<double>(n) : 0.0;
        }
      }
    }
  };

  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, tasks));
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) run(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks;) run(t);
      });
    }
  }

  auto params_at = [&](std::size_t point) {
    const std::size_t task = point / per_task, rest = point % per_task;
    return RRParams{grid.p_values[task / grid.gamma_values.size()],
                    grid.gamma_values[task % grid.gamma_values.size()],
                    grid.delta0_values[rest / nd1], grid.delta1_values[rest % nd1]};
  };
  std::vector<RREnvelope> env(P);
  const std::size_t points = tasks * per_task;
  const std::size_t worst_flags = *std::max_element(flags.begin(), flags.end());
  for (std::size_t k = 0; k < P; ++k) {
    std::size_t lo = 0, hi = 0;
    for (std::size_t pt = 1; pt < points; ++pt) {
      if (values[pt * P + k] < values[lo * P + k]) lo = pt;
      if (values[pt * P + k] > values[hi * P + k]) hi = pt;
    }
    env[k] = {values[lo * P + k], values[hi * P + k], params_at(lo), params_at(hi), worst_flags};
  }
  return env;
}

ResultsTable rr_envelope_table(const std::vector<Policy>& family,
                               const std::vector<PolicyValueEstimate>& direct,
                               const std::vector<RREnvelope>& envelopes, const std::string& regime) {
  if (family.size() != direct.size() || family.size() != envelopes.size()) {
    throw AlignmentError("envelope table inputs differ in length");
  }
  ResultsTable t;
  t.columns = {"threshold", "release_rate", "direct_value", "rr_min", "rr_max", "regime"};
  for (std::size_t k = 0; k < family.size(); ++k) {
    t.add_row({family[k].cutoff(), family[k].release_rate(), direct[k].value, envelopes[k].min,
               envelopes[k].max, regime});
  }
  return t;
}

}  // namespace polsens
