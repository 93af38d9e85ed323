#include "polsens/synthetic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <boost/math/tools/roots.hpp>
#include <json.hpp>

#include "polsens/errors.hpp"

namespace polsens {

using nlohmann::json;

// Found by argument-dependent lookup.
void to_json(json& j, const LogitPreset& p) {
  j = json{{"intercept", p.intercept}, {"age", p.age}, {"male", p.male}, {"prior_fta", p.prior_fta},
           {"extra", p.extra}};
}

void from_json(const json& j, LogitPreset& p) {
  p.intercept = j.value("intercept", 0.0);
  p.age = j.value("age", 0.0);
  p.male = j.value("male", 0.0);
  p.prior_fta = j.value("prior_fta", 0.0);
  p.extra = j.value("extra", std::vector<double>{});
}

namespace {

enum Stream : std::uint64_t { kCovariateStream = 1, kTreatmentStream, kUntreatedStream, kTreatedStream };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), 0x3c17u};
  return std::mt19937_64(seq);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Linear predictor without intercept, per unit.
std::vector<double> slopes_only(const ScenarioSpec& s, const LogitPreset& m,
                                const std::vector<std::vector<double>>& cov) {
  const std::size_t n = cov[0].size();
  std::vector<double> eta(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = m.age * (cov[0][i] - s.age_center) + m.male * cov[1][i] + m.prior_fta * cov[2][i];
    for (std::size_t k = 0; k < s.extra_features && k < m.extra.size(); ++k) v += m.extra[k] * cov[3 + k][i];
    eta[i] = v;
  }
  return eta;
}

// Intercept making the mean of logistic(c + eta[i]) over `rows` equal target.
double solve_intercept(const std::vector<double>& eta, const std::vector<std::size_t>& rows,
                       double target, const char* what) {
  if (rows.empty() || !(target > 0.0 && target < 1.0)) {
    throw CalibrationError(std::string("unreachable calibration target for ") + what);
  }
  auto f = [&](double c) {
    double s = 0.0;
    for (auto i : rows) s += logistic(c + eta[i]);
    return s / static_cast<double>(rows.size()) - target;
  };
  const double lo = -40.0, hi = 40.0;
  if (f(lo) > 0.0 || f(hi) < 0.0) {
    throw CalibrationError(std::string("unreachable calibration target for ") + what + ": " +
                           format_double(target));
  }
  const auto r = boost::math::tools::bisect(f, lo, hi, boost::math::tools::eps_tolerance<double>(48));
  return 0.5 * (r.first + r.second);
}

void fill_probs(const std::vector<double>& eta, double c, std::vector<double>& out) {
  out.resize(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) out[i] = logistic(c + eta[i]);
}

std::vector<double> bernoulli_stream(std::uint64_t seed, Stream s, const std::vector<double>& p) {
  auto rng = stream_rng(seed, s);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = u(rng) < p[i] ? 1.0 : 0.0;
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

}  // namespace

void ScenarioSpec::validate() const {
  if (n == 0) throw ValidationError("scenario needs at least one unit");
  if (age_weights.empty() || age_weights.size() != age_means.size() || age_weights.size() != age_sds.size()) {
    throw ValidationError("age mixture components differ in length");
  }
  for (std::size_t k = 0; k < age_weights.size(); ++k) {
    if (!(age_weights[k] >= 0.0) || !(age_sds[k] > 0.0)) throw ValidationError("invalid age mixture component");
  }
  if (!(age_min <= age_max)) throw ValidationError("age range is empty");
  if (!(male_rate >= 0.0 && male_rate <= 1.0)) throw ValidationError("male rate must be a probability");
  if (!(prior_fta_dispersion > 0.0) || !(prior_fta_mean >= 0.0) || !(prior_fta_cap >= 0.0)) {
    throw ValidationError("invalid prior-FTA generator");
  }
  if (calibrate) {
    for (double t : {release_rate, fta_released, fta_detained}) {
      if (!(t > 0.0 && t < 1.0)) throw ValidationError("calibration targets must lie in (0, 1)");
    }
  }
}

std::vector<std::string> ScenarioSpec::schema() const {
  std::vector<std::string> s{"age", "male", "prior_fta"};
  for (std::size_t k = 0; k < extra_features; ++k) s.push_back("case_" + std::to_string(k + 1));
  return s;
}

ScenarioSpec ScenarioSpec::paper_default() {
  ScenarioSpec s;
  s.untreated_outcome = {-1.7, -0.03, 0.25, 0.45, {0.4, 0.3}};
  s.treated_outcome = {-2.6, -0.03, 0.25, 0.40, {0.35, 0.25}};
  s.assignment = {-1.2, -0.015, 0.3, 0.5, {0.5, 0.3}};
  return s;
}

std::string ScenarioSpec::to_json() const {
  json j{{"n", n},
         {"age", {{"weights", age_weights}, {"means", age_means}, {"sds", age_sds}, {"min", age_min},
                  {"max", age_max}, {"center", age_center}}},
         {"male_rate", male_rate},
         {"prior_fta", {{"dispersion", prior_fta_dispersion}, {"mean", prior_fta_mean}, {"cap", prior_fta_cap}}},
         {"extra_features", extra_features},
         {"untreated_outcome", untreated_outcome},
         {"treated_outcome", treated_outcome},
         {"assignment", assignment},
         {"targets", {{"release_rate", release_rate}, {"fta_released", fta_released},
                      {"fta_detained", fta_detained}, {"calibrate", calibrate}}}};
  return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json(const std::string& text) {
  ScenarioSpec s = paper_default();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }
  try {
    s.n = j.value("n", s.n);
    if (j.contains("age")) {
      const auto& a = j["age"];
      s.age_weights = a.value("weights", s.age_weights);
      s.age_means = a.value("means", s.age_means);
      s.age_sds = a.value("sds", s.age_sds);
      s.age_min = a.value("min", s.age_min);
      s.age_max = a.value("max", s.age_max);
      s.age_center = a.value("center", s.age_center);
    }
    s.male_rate = j.value("male_rate", s.male_rate);
    if (j.contains("prior_fta")) {
      const auto& p = j["prior_fta"];
      s.prior_fta_dispersion = p.value("dispersion", s.prior_fta_dispersion);
      s.prior_fta_mean = p.value("mean", s.prior_fta_mean);
      s.prior_fta_cap = p.value("cap", s.prior_fta_cap);
    }
    s.extra_features = j.value("extra_features", s.extra_features);
    if (j.contains("untreated_outcome")) s.untreated_outcome = j["untreated_outcome"].get<LogitPreset>();
    if (j.contains("treated_outcome")) s.treated_outcome = j["treated_outcome"].get<LogitPreset>();
    if (j.contains("assignment")) s.assignment = j["assignment"].get<LogitPreset>();
    if (j.contains("targets")) {
      const auto& t = j["targets"];
      s.release_rate = t.value("release_rate", s.release_rate);
      s.fta_released = t.value("fta_released", s.fta_released);
      s.fta_detained = t.value("fta_detained", s.fta_detained);
      s.calibrate = t.value("calibrate", s.calibrate);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }
  s.validate();
  return s;
}

ScenarioSpec ScenarioSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

SyntheticTruth truth_from_probabilities(std::vector<std::string> schema, std::vector<UnitId> ids,
                                        std::vector<std::vector<double>> covariates,
                                        GeneratorProbs probs, std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (probs.mu0.size() != n || probs.mu1.size() != n || probs.e.size() != n) {
    throw AlignmentError("generator probabilities do not match the units");
  }
  for (const auto* v : {&probs.mu0, &probs.mu1, &probs.e}) {
    for (double p : *v) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("generator probability outside [0, 1]");
    }
  }
  SyntheticTruth truth;
  truth.seed = seed;
  const auto t = bernoulli_stream(seed, kTreatmentStream, probs.e);
  truth.y0 = bernoulli_stream(seed, kUntreatedStream, probs.mu0);
  truth.y1 = bernoulli_stream(seed, kTreatedStream, probs.mu1);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = t[i] != 0.0 ? truth.y1[i] : truth.y0[i];
  truth.base = Dataset::from_columns(std::move(schema), std::move(ids), std::move(covariates), t, std::move(y),
                                     "synthetic seed " + std::to_string(seed));
  truth.probs = std::move(probs);
  return truth;
}

SyntheticTruth generate_truth(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = spec.n;
  auto rng = stream_rng(seed, kCovariateStream);
  std::discrete_distribution<std::size_t> component(spec.age_weights.begin(), spec.age_weights.end());
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution male(spec.male_rate);
  // Negative binomial as a gamma-Poisson mixture with the given mean and dispersion.
  std::gamma_distribution<double> rate(spec.prior_fta_dispersion, spec.prior_fta_mean / spec.prior_fta_dispersion);

  std::vector<std::vector<double>> cov(3 + spec.extra_features, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = component(rng);
    cov[0][i] = std::clamp(std::round(spec.age_means[k] + spec.age_sds[k] * z(rng)), spec.age_min, spec.age_max);
    cov[1][i] = male(rng) ? 1.0 : 0.0;
    const double lam = spec.prior_fta_mean > 0.0 ? rate(rng) : 0.0;
    const double count = lam > 0.0 ? static_cast<double>(std::poisson_distribution<int>(lam)(rng)) : 0.0;
    cov[2][i] = std::min(count, spec.prior_fta_cap);
    for (std::size_t f = 0; f < spec.extra_features; ++f) cov[3 + f][i] = z(rng);
  }

  const auto eta_e = slopes_only(spec, spec.assignment, cov);
  const auto eta0 = slopes_only(spec, spec.untreated_outcome, cov);
  const auto eta1 = slopes_only(spec, spec.treated_outcome, cov);

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  GeneratorProbs probs;
  const double ce = spec.calibrate ? solve_intercept(eta_e, all, 1.0 - spec.release_rate, "treatment rate")
                                   : spec.assignment.intercept;
  fill_probs(eta_e, ce, probs.e);

  // Outcome targets are conditional on the realised treatment, which comes
  // from its own stream and so can be drawn before the outcome intercepts are known.
  const auto t = bernoulli_stream(seed, kTreatmentStream, probs.e);
  std::vector<std::size_t> released, detained;
  for (std::size_t i = 0; i < n; ++i) (t[i] != 0.0 ? detained : released).push_back(i);
  const double c0 = spec.calibrate ? solve_intercept(eta0, released, spec.fta_released, "FTA among released")
                                   : spec.untreated_outcome.intercept;
  const double c1 = spec.calibrate ? solve_intercept(eta1, detained, spec.fta_detained, "FTA among detained")
                                   : spec.treated_outcome.intercept;
  fill_probs(eta0, c0, probs.mu0);
  fill_probs(eta1, c1, probs.mu1);

  std::vector<UnitId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<UnitId>(i + 1);
  return truth_from_probabilities(spec.schema(), std::move(ids), std::move(cov), std::move(probs), seed);
}

Dataset censor(const SyntheticTruth& truth, std::span<const std::string> keep) {
  if (keep.empty()) throw SchemaError("censoring must keep at least one covariate");
  for (const auto& k : keep) {
    if (!truth.base.column_index(k)) throw SchemaError("unknown covariate in censoring: " + k);
  }
  Dataset d = truth.base.select(keep);
  d.set_provenance(truth.base.provenance() + " censored to {" +
                   join(std::vector<std::string>(keep.begin(), keep.end()), ",") + "}");
  return d;
}

void potential_outcomes(const SyntheticTruth& truth, std::span<const UnitId> ids, std::vector<double>& y0,
                        std::vector<double>& y1) {
  const auto rows = rows_of(truth.base, ids);
  y0.resize(rows.size());
  y1.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    y0[k] = truth.y0[rows[k]];
    y1[k] = truth.y1[rows[k]];
  }
}

void write_truth(const SyntheticTruth& truth, const std::filesystem::path& path) {
  ResultsTable t;
  t.columns = {"id"};
  for (const auto& c : truth.base.schema()) t.columns.push_back(c);
  for (const char* c : {"t", "y0", "y1", "mu0", "mu1", "e"}) t.columns.push_back(c);
  const auto& d = truth.base;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<Cell> row{static_cast<std::int64_t>(d.id(i))};
    for (std::size_t j = 0; j < d.width(); ++j) row.emplace_back(d.covariate(i, j));
    row.emplace_back(static_cast<std::int64_t>(d.treatment_at(i)));
    row.emplace_back(static_cast<std::int64_t>(truth.y0[i]));
    row.emplace_back(static_cast<std::int64_t>(truth.y1[i]));
    row.emplace_back(truth.probs.mu0[i]);
    row.emplace_back(truth.probs.mu1[i]);
    row.emplace_back(truth.probs.e[i]);
    t.rows.push_back(std::move(row));
  }
  write_results(t, path);
}

SyntheticTruth read_truth(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t w = csv.header.size();
  if (w < 8 || csv.header[0] != "id" || csv.header[w - 6] != "t" || csv.header[w - 5] != "y0" ||
      csv.header[w - 4] != "y1" || csv.header[w - 3] != "mu0" || csv.header[w - 2] != "mu1" ||
      csv.header[w - 1] != "e") {
    throw SchemaError("truth file " + path.string() + " lacks the id,...,t,y0,y1,mu0,mu1,e layout");
  }
  const std::size_t p = w - 7;
  std::vector<std::string> schema(csv.header.begin() + 1, csv.header.begin() + 1 + static_cast<long>(p));
  const std::size_t n = csv.rows.size();
  std::vector<UnitId> ids(n);
  std::vector<std::vector<double>> cov(p, std::vector<double>(n));
  std::vector<double> t(n), y(n);
  SyntheticTruth truth;
  truth.y0.resize(n);
  truth.y1.resize(n);
  truth.probs.mu0.resize(n);
  truth.probs.mu1.resize(n);
  truth.probs.e.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = csv.rows[i];
    if (r.size() != w) throw ParseError("truth file row " + std::to_string(i + 2) + " has wrong width");
    ids[i] = static_cast<UnitId>(std::llround(parse_double(r[0])));
    for (std::size_t j = 0; j < p; ++j) cov[j][i] = parse_double(r[1 + j]);
    t[i] = parse_double(r[w - 6]);
    truth.y0[i] = parse_double(r[w - 5]);
    truth.y1[i] = parse_double(r[w - 4]);
    truth.probs.mu0[i] = parse_double(r[w - 3]);
    truth.probs.mu1[i] = parse_double(r[w - 2]);
    truth.probs.e[i] = parse_double(r[w - 1]);
    y[i] = t[i] != 0.0 ? truth.y1[i] : truth.y0[i];
  }
  truth.base = Dataset::from_columns(std::move(schema), std::move(ids), std::move(cov), std::move(t), std::move(y),
                                     path.string());
  return truth;
}

std::vector<std::vector<std::string>> default_censorings() {
  return {{"age"}, {"age", "male"}, {"age", "male", "prior_fta"}};
}

std::vector<Subgroup> default_subgroups(const Dataset& full) {
  const auto age = full.column("age");
  const auto male = full.column("male");
  const auto fta = full.column("prior_fta");
  std::vector<Subgroup> g;
  auto add = [&](std::string name, auto pred) {
    Subgroup s{std::move(name), group_mask(full, pred)};
    if (std::any_of(s.mask.begin(), s.mask.end(), [](auto v) { return v != 0; })) g.push_back(std::move(s));
  };
  add("age 18-24", [&](std::size_t i) { return age[i] < 25; });
  add("age 25-34", [&](std::size_t i) { return age[i] >= 25 && age[i] < 35; });
  add("age 35-44", [&](std::size_t i) { return age[i] >= 35 && age[i] < 45; });
  add("age 45+", [&](std::size_t i) { return age[i] >= 45; });
  add("female", [&](std::size_t i) { return male[i] == 0.0; });
  add("male", [&](std::size_t i) { return male[i] != 0.0; });
  add("prior FTA 0", [&](std::size_t i) { return fta[i] == 0.0; });
  add("prior FTA 1", [&](std::size_t i) { return fta[i] == 1.0; });
  add("prior FTA 2-3", [&](std::size_t i) { return fta[i] >= 2.0 && fta[i] <= 3.0; });
  add("prior FTA 4+", [&](std::size_t i) { return fta[i] >= 4.0; });
  return g;
}

std::vector<double> default_threshold_grid(PolicyMode mode) {
  std::vector<double> t;
  for (int k = 0; k < 15; ++k) t.push_back(mode == PolicyMode::kAbsolute ? 0.03 * (k + 1) : k / 14.0);
  return t;
}

double CensoringReport::coverage() const {
  if (thresholds.empty()) return 0.0;
  std::size_t c = 0;
  for (const auto& r : thresholds) c += r.covered;
  return static_cast<double>(c) / static_cast<double>(thresholds.size());
}

double CensoringReport::mean_band_width() const {
  if (thresholds.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : thresholds) s += r.band.q975 - r.band.q025;
  return s / static_cast<double>(thresholds.size());
}

double ValidationReport::subgroup_coverage() const {
  std::size_t c = 0, n = 0;
  for (const auto& r : censorings) {
    for (const auto& s : r.subgroups) {
      c += s.covered;
      ++n;
    }
  }
  return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
}

namespace {

CensoringReport validate_one(const SyntheticTruth& truth, const std::vector<std::string>& keep,
                             const ValidationOptions& opt, const std::vector<double>& thresholds,
                             const std::vector<RRGrid>& regimes) {
  CensoringReport rep;
  rep.keep = keep;
  rep.label = join(keep, "+");
  const Dataset d = censor(truth, keep);
  const FoldSplit folds = split_folds_with_eval_count(d, opt.seed, opt.eval_count);
  const Dataset eval = d.subset(rows_of(d, folds.eval_fold));

  // Policy-fold risk model: outcome on released units.
  RowSet released;
  for (auto r : rows_of(d, folds.policy_fold)) {
    if (!d.treatment_at(r)) released.push_back(r);
  }
  const GlmFit risk = fit_lasso_logit_cv(d, Target::kOutcome, released, opt.cv);
  const auto scores = make_scores(folds.eval_fold, predict(risk, eval));
  std::vector<Policy> family;
  if (opt.policy_mode == PolicyMode::kAbsolute) {
    family = make_policy_family(scores, thresholds);
  } else {
    for (double q : thresholds) family.push_back(Policy::quantile(scores, q));
  }

  const NuisanceEstimates nz = fit_nuisance(d, folds.nuisance_fold, eval, opt.cv);
  std::vector<double> y0, y1;
  potential_outcomes(truth, folds.eval_fold, y0, y1);

  const SensitivityFit fit = fit_sensitivity(eval, nz, opt.sensitivity);
  rep.max_rhat = fit.max_rhat;
  rep.rhat_flag = fit.rhat_flag;
  rep.divergences = fit.draws.divergences;
  const ConfoundModel model(eval, nz, fit.bins, opt.sensitivity);
  const auto cf = CounterfactualDraws::from_posterior(model, eval, fit.draws);

  std::vector<std::vector<RREnvelope>> rr;
  for (const auto& g : regimes) rr.push_back(rr_sweep(eval, nz, family, g, 1));

  for (std::size_t k = 0; k < family.size(); ++k) {
    ThresholdRow row;
    row.threshold = family[k].cutoff();
    row.release_rate = family[k].release_rate();
    row.oracle = oracle_policy_value(y0, y1, family[k]);
    row.direct = direct_policy_value(eval, family[k], nz).value;
    row.band = summarize(cf.policy_value(family[k]));
    row.covered = row.band.q025 <= row.oracle && row.oracle <= row.band.q975;
    for (const auto& r : rr) row.rr.push_back(r[k]);
    rep.thresholds.push_back(std::move(row));
  }

  if (opt.subgroups) {
    const Dataset full_eval = truth.base.subset(rows_of(truth.base, folds.eval_fold));
    for (auto& g : default_subgroups(full_eval)) {
      SubgroupRow row;
      row.group = g.name;
      double diff = 0.0;
      for (std::size_t i = 0; i < g.mask.size(); ++i) {
        if (g.mask[i]) {
          ++row.size;
          diff += y1[i] - y0[i];
        }
      }
      row.oracle = diff / static_cast<double>(row.size);
      row.direct = subgroup_ate(eval.ids(), g.mask,
                                [&](const Policy& pi) { return direct_policy_value(eval, pi, nz).value; });
      row.band = summarize(cf.subgroup_ate(g.mask));
      row.covered = row.band.q025 <= row.oracle && row.oracle <= row.band.q975;
      rep.subgroups.push_back(std::move(row));
    }
  }
  return rep;
}

}  // namespace

ValidationReport run_validation_suite(const SyntheticTruth& truth,
                                      const std::vector<std::vector<std::string>>& censorings,
                                      const ValidationOptions& options) {
  if (censorings.empty()) throw ValidationError("no censorings requested");
  const auto thresholds = options.thresholds.empty() ? default_threshold_grid(options.policy_mode) : options.thresholds;
  const auto regimes = options.rr_regimes.empty() ? default_regimes() : options.rr_regimes;
  ValidationReport report;
  report.censorings.resize(censorings.size());

  unsigned workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, censorings.size()));
  std::vector<std::exception_ptr> errors(censorings.size());
  auto work = [&](std::size_t c) {
    try {
      report.censorings[c] = validate_one(truth, censorings[c], options, thresholds, regimes);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < censorings.size(); ++c) work(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c; (c = next.fetch_add(1)) < censorings.size();) work(c);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

ResultsTable coverage_table(const ValidationReport& report) {
  ResultsTable t;
  t.columns = {"censoring", "threshold", "release_rate", "oracle_value", "direct_value", "q025", "q25", "q50",
               "q75", "q975", "covered", "band_width"};
  const std::size_t regimes = report.censorings.empty() || report.censorings[0].thresholds.empty()
                                  ? 0
                                  : report.censorings[0].thresholds[0].rr.size();
  for (std::size_t r = 0; r < regimes; ++r) {
    t.columns.push_back("rr_min_" + std::to_string(r + 1));
    t.columns.push_back("rr_max_" + std::to_string(r + 1));
  }
  for (const auto& c : report.censorings) {
    for (const auto& row : c.thresholds) {
      std::vector<Cell> cells{c.label,        row.threshold, row.release_rate, row.oracle,
                              row.direct,     row.band.q025, row.band.q25,     row.band.q50,
                              row.band.q75,   row.band.q975, static_cast<std::int64_t>(row.covered),
                              row.band.q975 - row.band.q025};
      for (const auto& e : row.rr) {
        cells.emplace_back(e.min);
        cells.emplace_back(e.max);
      }
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

ResultsTable subgroup_table(const ValidationReport& report) {
  ResultsTable t;
  t.columns = {"censoring", "group", "size", "oracle_ate", "direct_ate", "q025", "q50", "q975", "covered"};
  for (const auto& c : report.censorings) {
    for (const auto& s : c.subgroups) {
      t.rows.push_back({c.label, s.group, static_cast<std::int64_t>(s.size), s.oracle, s.direct, s.band.q025,
                        s.band.q50, s.band.q975, static_cast<std::int64_t>(s.covered)});
    }
  }
  return t;
}

}  // namespace polsens
