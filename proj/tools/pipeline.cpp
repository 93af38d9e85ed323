#include "pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "polsens/errors.hpp"
#include "polsens/trunc.hpp"

#ifndef POLSENS_VERSION
#define POLSENS_VERSION "dev"
#endif

namespace polsens::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex_sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

void ensure_output_dir(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.output_dir.string() + ": " + ec.message());
}

void require(const RunConfig& c, const std::string& file) {
  if (!fs::exists(c.out(file))) {
    throw MissingArtifactError("missing " + c.out(file).string() + "; run `polsens " + artifact::producer(file) +
                               "` first with the same --out");
  }
}

std::string mode_name(PolicyMode m) {
  switch (m) {
    case PolicyMode::kAbsolute: return "absolute";
    case PolicyMode::kQuantile: return "quantile";
    default: return "explicit";
  }
}

PolicyMode parse_mode(const std::string& s) {
  if (s == "absolute") return PolicyMode::kAbsolute;
  if (s == "quantile") return PolicyMode::kQuantile;
  throw ValidationError("policy_mode must be \"quantile\" or \"absolute\", got \"" + s + "\"");
}

std::string coord_name(ChainCoordinates c) {
  switch (c) {
    case ChainCoordinates::kCentered: return "centered";
    case ChainCoordinates::kLoadingsNonCentered: return "loadings_noncentered";
    default: return "noncentered";
  }
}

ChainCoordinates parse_coord(const std::string& s) {
  if (s == "centered") return ChainCoordinates::kCentered;
  if (s == "loadings_noncentered") return ChainCoordinates::kLoadingsNonCentered;
  if (s == "noncentered") return ChainCoordinates::kNonCentered;
  throw ValidationError("unknown sensitivity.coordinates \"" + s + "\"");
}

json grid_json(const RRGrid& g) {
  return {{"p", g.p_values}, {"gamma", g.gamma_values}, {"delta0", g.delta0_values}, {"delta1", g.delta1_values}};
}

RRGrid grid_from(const json& j) {
  RRGrid g;
  j.at("p").get_to(g.p_values);
  j.at("gamma").get_to(g.gamma_values);
  j.at("delta0").get_to(g.delta0_values);
  j.at("delta1").get_to(g.delta1_values);
  return g;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ValidationError("unknown key \"" + k + "\" in " + where);
  }
}

unsigned worker_cap(const RunConfig& c) {
  return c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
}

SensitivitySpec sensitivity_spec(const RunConfig& c) {
  SensitivitySpec s = c.sensitivity;
  s.sampler.seed = c.seed;
  if (c.threads) s.sampler.threads = std::min<std::size_t>(c.threads, s.sampler.chains);
  return s;
}

CvOptions cv_options(const RunConfig& c) {
  CvOptions cv = c.cv;
  cv.seed = c.seed;
  return cv;
}

Dataset load_observed(const RunConfig& c) {
  const fs::path p = c.data_path();
  if (!fs::exists(p)) {
    if (c.data) throw IoError("dataset " + p.string() + " does not exist");
    throw MissingArtifactError("missing " + p.string() + "; run `polsens synth` first or set \"data\" in the config");
  }
  return load_dataset(p);
}

std::optional<SyntheticTruth> maybe_truth(const RunConfig& c) {
  if (!fs::exists(c.out(artifact::kTruth))) return std::nullopt;
  return read_truth(c.out(artifact::kTruth));
}

NuisanceEstimates read_nuisance(const RunConfig& c) {
  require(c, artifact::kNuisance);
  const CsvTable t = read_csv(c.out(artifact::kNuisance));
  const auto id = t.column("id"), m0 = t.column("mu0_hat"), m1 = t.column("mu1_hat"), e = t.column("e_hat");
  NuisanceEstimates nz;
  for (const auto& r : t.rows) {
    nz.ids.push_back(static_cast<UnitId>(std::stoll(r[id])));
    nz.mu0_hat.push_back(parse_double(r[m0]));
    nz.mu1_hat.push_back(parse_double(r[m1]));
    nz.e_hat.push_back(parse_double(r[e]));
  }
  return nz;
}

RiskScoresPtr read_scores(const RunConfig& c) {
  require(c, artifact::kScores);
  const CsvTable t = read_csv(c.out(artifact::kScores));
  const auto id = t.column("id"), sc = t.column("score");
  std::vector<UnitId> ids;
  std::vector<double> s;
  for (const auto& r : t.rows) {
    ids.push_back(static_cast<UnitId>(std::stoll(r[id])));
    s.push_back(parse_double(r[sc]));
  }
  return make_scores(std::move(ids), std::move(s));
}

std::vector<Policy> build_family(const RunConfig& c, const RiskScoresPtr& scores) {
  const auto grid = c.threshold_grid();
  if (c.policy_mode == PolicyMode::kAbsolute) return make_policy_family(scores, grid);
  std::vector<Policy> f;
  for (double q : grid) f.push_back(Policy::quantile(scores, q));
  return f;
}

// Evaluation-fold view in nuisance order, with matching scores.
struct EvalInputs {
  Dataset eval;
  NuisanceEstimates nz;
  RiskScoresPtr scores;
  std::vector<Policy> family;
};

EvalInputs eval_inputs(const RunConfig& c) {
  EvalInputs in;
  const Dataset d = load_observed(c);
  in.nz = read_nuisance(c);
  in.scores = read_scores(c);
  if (in.scores->ids != in.nz.ids) {
    throw AlignmentError("scores.csv and nuisance.csv list different units; rerun `polsens fit-nuisance` and `polsens policies`");
  }
  in.eval = d.subset(rows_of(d, in.nz.ids));
  in.family = build_family(c, in.scores);
  return in;
}

// Oracle potential outcomes for the given ids when a truth file covers them.
bool oracle_outcomes(const std::optional<SyntheticTruth>& truth, std::span<const UnitId> ids,
                     std::vector<double>& y0, std::vector<double>& y1) {
  if (!truth) return false;
  for (auto id : ids) {
    if (!truth->base.row_of(id)) return false;
  }
  potential_outcomes(*truth, ids, y0, y1);
  return true;
}

constexpr char kDrawsMagic[4] = {'P', 'S', 'C', 'F'};

void write_counterfactual(const fs::path& p, const CounterfactualDraws& cf) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  const std::uint64_t n = cf.size(), draws = cf.draws();
  out.write(kDrawsMagic, 4);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&draws), sizeof draws);
  out.write(reinterpret_cast<const char*>(cf.ids().data()), static_cast<std::streamsize>(n * sizeof(UnitId)));
  std::vector<double> row(n);
  for (std::size_t k = 0; k < draws; ++k) {
    for (std::size_t i = 0; i < n; ++i) row[i] = cf.value(k, i);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + p.string());
}

CounterfactualDraws read_counterfactual(const fs::path& p, const Dataset& eval) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  char magic[4];
  std::uint64_t n = 0, draws = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&draws), sizeof draws);
  if (!in || std::memcmp(magic, kDrawsMagic, 4) != 0) throw ParseError(p.string() + " is not a counterfactual draw file");
  std::vector<UnitId> ids(n);
  in.read(reinterpret_cast<char*>(ids.data()), static_cast<std::streamsize>(n * sizeof(UnitId)));
  std::vector<double> values(n * draws);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw ParseError(p.string() + " is truncated");
  if (!std::equal(ids.begin(), ids.end(), eval.ids().begin(), eval.ids().end())) {
    throw AlignmentError(p.string() + " does not match the evaluation fold; rerun `polsens sensitivity`");
  }
  return CounterfactualDraws(std::move(ids), {eval.treatment().begin(), eval.treatment().end()},
                             {eval.outcome().begin(), eval.outcome().end()}, draws, std::move(values));
}

json fit_diagnostics(const SensitivityFit& fit, const SensitivitySpec& spec) {
  json chains = json::array();
  for (const auto& s : fit.draws.stats) {
    chains.push_back({{"step_size", s.step_size}, {"mean_accept", s.mean_accept}, {"divergences", s.divergences}});
  }
  std::vector<std::size_t> order(fit.draws.rhat.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fit.draws.rhat[a] > fit.draws.rhat[b]; });
  json worst = json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(10, order.size()); ++k) {
    const auto i = order[k];
    worst.push_back({{"name", i < fit.draws.names.size() ? fit.draws.names[i] : std::to_string(i)},
                     {"rhat", fit.draws.rhat[i]}});
  }
  return {{"K", spec.K},
          {"sigma_tau", spec.sigma_tau},
          {"max_rhat", fit.max_rhat},
          {"rhat_flag", fit.rhat_flag},
          {"rhat_clean", fit.rhat_clean},
          {"divergences", fit.draws.divergences},
          {"divergence_flag", fit.draws.divergence_flag},
          {"min_ess", fit.draws.min_ess()},
          {"chains", chains},
          {"worst_parameters", worst}};
}

bool gate_fails(const RunConfig& c, double max_rhat) { return c.rhat_gate > 0 && !(max_rhat <= c.rhat_gate); }

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
  if (scenario && !fs::exists(*scenario)) throw ValidationError("scenario file " + scenario->string() + " does not exist");
  if (data && !fs::exists(*data)) throw ValidationError("data file " + data->string() + " does not exist");
  if (n && *n < 100) throw ValidationError("n must be at least 100");
  for (double f : {folds.policy, folds.nuisance, folds.eval}) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("fold fractions must lie in (0, 1)");
  }
  if (std::abs(folds.policy + folds.nuisance + folds.eval - 1.0) > 1e-9) {
    throw ValidationError("fold fractions must sum to 1");
  }
  if (cv.folds < 2) throw ValidationError("cv.folds must be at least 2");
  for (double l : cv.lambda_grid) {
    if (!(l >= 0.0)) throw ValidationError("lambda grid values must be non-negative");
  }
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("thresholds must lie in [0, 1]");
  }
  for (double q : quantile_grid) {
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile_grid values must lie in [0, 1]");
  }
  if (sensitivity.K < 1) throw ValidationError("sensitivity.K must be at least 1");
  if (!(sensitivity.sigma_tau > 0.0)) throw ValidationError("sensitivity.sigma_tau must be positive");
  if (sensitivity.sampler.chains < 1 || sensitivity.sampler.draws < 1) {
    throw ValidationError("sampler chains and draws must be positive");
  }
  for (auto k : sweep_k) {
    if (k < 1) throw ValidationError("sweep K values must be at least 1");
  }
  for (double s : sweep_sigma_tau) {
    if (!(s > 0.0)) throw ValidationError("sweep sigma_tau values must be positive");
  }
  for (const auto& g : rr_regimes) g.validate();
  for (const auto& keep_set : censorings) {
    if (keep_set.empty()) throw ValidationError("each censoring must keep at least one covariate");
  }
}

json RunConfig::to_json() const {
  json regimes = json::array();
  for (const auto& g : rr_regimes) regimes.push_back(grid_json(g));
  return {
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"scenario", scenario ? json(scenario->string()) : json(nullptr)},
      {"n", n ? json(*n) : json(nullptr)},
      {"data", data ? json(data->string()) : json(nullptr)},
      {"keep", keep},
      {"folds", {{"policy", folds.policy}, {"nuisance", folds.nuisance}, {"eval", folds.eval}}},
      {"eval_count", eval_count},
      {"cv", {{"folds", cv.folds}, {"lambda_grid", cv.lambda_grid}}},
      {"policy_mode", mode_name(policy_mode)},
      {"thresholds", thresholds},
      {"sensitivity",
       {{"K", sensitivity.K},
        {"sigma_tau", sensitivity.sigma_tau},
        {"coordinates", coord_name(sensitivity.coordinates)},
        {"chains", sensitivity.sampler.chains},
        {"warmup", sensitivity.sampler.warmup},
        {"draws", sensitivity.sampler.draws},
        {"target_accept", sensitivity.sampler.target_accept}}},
      {"sweep_k", sweep_k},
      {"sweep_sigma_tau", sweep_sigma_tau},
      {"rr_regimes", regimes},
      {"censorings", censorings},
      {"quantile_grid", quantile_grid},
      {"rhat_gate", rhat_gate},
      {"threads", threads},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown(j,
                   {"seed", "output_dir", "scenario", "n", "data", "keep", "folds", "eval_count", "cv", "policy_mode",
                    "thresholds", "sensitivity", "sweep_k", "sweep_sigma_tau", "rr_regimes", "censorings",
                    "quantile_grid", "rhat_gate", "threads"},
                   "config");
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    if (j.contains("scenario") && !j["scenario"].is_null()) c.scenario = j["scenario"].get<std::string>();
    if (j.contains("n") && !j["n"].is_null()) c.n = j["n"].get<std::size_t>();
    if (j.contains("data") && !j["data"].is_null()) c.data = j["data"].get<std::string>();
    c.keep = j.value("keep", c.keep);
    if (j.contains("folds")) {
      const auto& f = j["folds"];
      reject_unknown(f, {"policy", "nuisance", "eval"}, "folds");
      c.folds.policy = f.value("policy", c.folds.policy);
      c.folds.nuisance = f.value("nuisance", c.folds.nuisance);
      c.folds.eval = f.value("eval", c.folds.eval);
    }
    c.eval_count = j.value("eval_count", c.eval_count);
    if (j.contains("cv")) {
      const auto& v = j["cv"];
      reject_unknown(v, {"folds", "lambda_grid"}, "cv");
      c.cv.folds = v.value("folds", c.cv.folds);
      c.cv.lambda_grid = v.value("lambda_grid", c.cv.lambda_grid);
    }
    if (j.contains("policy_mode")) c.policy_mode = parse_mode(j["policy_mode"].get<std::string>());
    c.thresholds = j.value("thresholds", c.thresholds);
    if (j.contains("sensitivity")) {
      const auto& s = j["sensitivity"];
      reject_unknown(s, {"K", "sigma_tau", "coordinates", "chains", "warmup", "draws", "target_accept"}, "sensitivity");
      c.sensitivity.K = s.value("K", c.sensitivity.K);
      c.sensitivity.sigma_tau = s.value("sigma_tau", c.sensitivity.sigma_tau);
      if (s.contains("coordinates")) c.sensitivity.coordinates = parse_coord(s["coordinates"].get<std::string>());
      c.sensitivity.sampler.chains = s.value("chains", c.sensitivity.sampler.chains);
      c.sensitivity.sampler.warmup = s.value("warmup", c.sensitivity.sampler.warmup);
      c.sensitivity.sampler.draws = s.value("draws", c.sensitivity.sampler.draws);
      c.sensitivity.sampler.target_accept = s.value("target_accept", c.sensitivity.sampler.target_accept);
    }
    c.sweep_k = j.value("sweep_k", c.sweep_k);
    c.sweep_sigma_tau = j.value("sweep_sigma_tau", c.sweep_sigma_tau);
    if (j.contains("rr_regimes")) {
      for (const auto& g : j["rr_regimes"]) {
        reject_unknown(g, {"p", "gamma", "delta0", "delta1"}, "rr_regimes entry");
        c.rr_regimes.push_back(grid_from(g));
      }
    }
    c.censorings = j.value("censorings", c.censorings);
    c.quantile_grid = j.value("quantile_grid", c.quantile_grid);
    c.rhat_gate = j.value("rhat_gate", c.rhat_gate);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file " + path.string() + " does not exist");
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("threads");  // results do not depend on it
  return hex_sha256(j.dump());
}

std::vector<double> RunConfig::threshold_grid() const {
  return thresholds.empty() ? default_threshold_grid(policy_mode) : thresholds;
}

std::vector<double> RunConfig::rank_grid() const {
  if (!quantile_grid.empty()) return quantile_grid;
  std::vector<double> g;
  for (int k = 0; k <= 20; ++k) g.push_back(k / 20.0);
  return g;
}

fs::path RunConfig::data_path() const { return data ? *data : out(artifact::kData); }

std::string artifact::producer(const std::string& file) {
  static const std::map<std::string, std::string> by_file{
      {kTruth, "synth"},
      {kData, "synth"},
      {kScenario, "synth"},
      {kFolds, "fit-nuisance"},
      {kNuisance, "fit-nuisance"},
      {kScores, "policies"},
      {kPolicies, "policies"},
      {kDirect, "evaluate-direct"},
      {kSensitivity, "sensitivity"},
      {kSensitivitySweep, "sensitivity"},
      {kDiagnostics, "sensitivity"},
      {kCounterfactual, "sensitivity"},
      {kEnvelope, "rr-sweep"},
      {kSubgroups, "subgroup"},
      {kRanking, "rank-check"},
      {kCoverage, "validate"},
      {kValidationSubgroups, "validate"},
      {kValidationSummary, "validate"},
      {kReport, "report"},
      {kReportSummary, "report"},
  };
  const auto it = by_file.find(file);
  return it == by_file.end() ? "?" : it->second;
}

// ---------------------------------------------------------------------------
// Commands

CommandResult run_synth(const RunConfig& c) {
  ScenarioSpec spec = c.scenario ? ScenarioSpec::load(*c.scenario) : ScenarioSpec::paper_default();
  if (c.n) spec.n = *c.n;
  const SyntheticTruth truth = generate_truth(spec, c.seed);
  const auto keep = c.keep.empty() ? truth.base.schema() : c.keep;
  const Dataset observed = censor(truth, keep);

  ensure_output_dir(c);
  write_truth(truth, c.out(artifact::kTruth));
  write_dataset(observed, c.out(artifact::kData));
  spit(c.out(artifact::kScenario), json::parse(spec.to_json()).dump(2) + "\n");

  double released = 0, fta = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    released += 1.0 - truth.base.treatment()[i];
    fta += truth.base.outcome()[i];
  }
  const double n = static_cast<double>(truth.size());
  return {{artifact::kTruth, artifact::kData, artifact::kScenario},
          {{"n", truth.size()}, {"observed_covariates", keep}, {"release_rate", released / n}, {"outcome_rate", fta / n}}};
}

CommandResult run_fit_nuisance(const RunConfig& c) {
  const Dataset d = load_observed(c);
  const FoldSplit folds = c.eval_count ? split_folds_with_eval_count(d, c.seed, c.eval_count)
                                       : split_folds(d, c.seed, c.folds);
  const Dataset eval = d.subset(rows_of(d, folds.eval_fold));
  const NuisanceEstimates nz = fit_nuisance(d, folds.nuisance_fold, eval, cv_options(c));

  ensure_output_dir(c);
  ResultsTable ft({"id", "fold"});
  std::map<UnitId, std::string> fold_of;
  for (auto id : folds.policy_fold) fold_of[id] = "policy";
  for (auto id : folds.nuisance_fold) fold_of[id] = "nuisance";
  for (auto id : folds.eval_fold) fold_of[id] = "eval";
  for (auto id : d.ids()) ft.add_row({static_cast<std::int64_t>(id), fold_of.at(id)});
  write_results(ft, c.out(artifact::kFolds));
  write_results(nuisance_table(nz), c.out(artifact::kNuisance));

  return {{artifact::kFolds, artifact::kNuisance},
          {{"policy_fold", folds.policy_fold.size()},
           {"nuisance_fold", folds.nuisance_fold.size()},
           {"eval_fold", folds.eval_fold.size()},
           {"lambda", {{"mu0", nz.mu0_fit.lambda}, {"mu1", nz.mu1_fit.lambda}, {"e", nz.e_fit.lambda}}}}};
}

CommandResult run_policies(const RunConfig& c) {
  const Dataset d = load_observed(c);
  require(c, artifact::kFolds);
  const CsvTable ft = read_csv(c.out(artifact::kFolds));
  const auto idc = ft.column("id"), fc = ft.column("fold");
  std::vector<UnitId> policy_ids;
  for (const auto& r : ft.rows) {
    if (r[fc] == "policy") policy_ids.push_back(static_cast<UnitId>(std::stoll(r[idc])));
  }
  const NuisanceEstimates nz = read_nuisance(c);

  RowSet released;
  for (auto r : rows_of(d, policy_ids)) {
    if (!d.treatment_at(r)) released.push_back(r);
  }
  const GlmFit risk = fit_lasso_logit_cv(d, Target::kOutcome, released, cv_options(c));
  const Dataset eval = d.subset(rows_of(d, nz.ids));
  const auto scores = make_scores(nz.ids, predict(risk, eval));
  const auto family = build_family(c, scores);

  ensure_output_dir(c);
  ResultsTable st({"id", "score"});
  for (std::size_t i = 0; i < scores->ids.size(); ++i) {
    st.add_row({static_cast<std::int64_t>(scores->ids[i]), scores->scores[i]});
  }
  write_results(st, c.out(artifact::kScores));
  ResultsTable pt({"threshold", "release_rate", "released"});
  for (const auto& pi : family) {
    pt.add_row({pi.cutoff(), pi.release_rate(), static_cast<std::int64_t>(pi.released())});
  }
  write_results(pt, c.out(artifact::kPolicies));

  json coef = json::object();
  for (std::size_t j = 0; j < risk.schema.size(); ++j) coef[risk.schema[j]] = risk.coefficients[j];
  return {{artifact::kScores, artifact::kPolicies},
          {{"mode", mode_name(c.policy_mode)},
           {"policies", family.size()},
           {"risk_model", {{"lambda", risk.lambda}, {"intercept", risk.intercept}, {"coefficients", coef}}}}};
}

CommandResult run_evaluate_direct(const RunConfig& c) {
  const EvalInputs in = eval_inputs(c);
  std::vector<PolicyValueEstimate> direct;
  for (const auto& pi : in.family) direct.push_back(direct_policy_value(in.eval, pi, in.nz));

  std::vector<double> y0, y1;
  std::optional<std::vector<double>> oracle;
  if (oracle_outcomes(maybe_truth(c), in.nz.ids, y0, y1)) {
    oracle.emplace();
    for (const auto& pi : in.family) oracle->push_back(oracle_policy_value(y0, y1, pi));
  }
  ensure_output_dir(c);
  write_results(policy_curve_table(in.family, direct, oracle), c.out(artifact::kDirect));
  return {{artifact::kDirect}, {{"policies", in.family.size()}, {"oracle_column", oracle.has_value()}}};
}

CommandResult run_sensitivity(const RunConfig& c) {
  const EvalInputs in = eval_inputs(c);
  ensure_output_dir(c);
  const bool sweep = !c.sweep_k.empty() || !c.sweep_sigma_tau.empty();

  if (!sweep) {
    const SensitivitySpec spec = sensitivity_spec(c);
    const SensitivityFit fit = fit_sensitivity(in.eval, in.nz, spec);
    json diag = fit_diagnostics(fit, spec);
    diag["gate"] = c.rhat_gate;
    spit(c.out(artifact::kDiagnostics), diag.dump(2) + "\n");
    if (gate_fails(c, fit.max_rhat)) {
      throw ConvergenceError("max R-hat " + format_double(fit.max_rhat) + " exceeds the gate " +
                             format_double(c.rhat_gate) + "; see " + c.out(artifact::kDiagnostics).string());
    }
    const ConfoundModel model(in.eval, in.nz, fit.bins, spec);
    const auto cf = CounterfactualDraws::from_posterior(model, in.eval, fit.draws);
    std::vector<BandSummary> bands;
    for (const auto& pi : in.family) bands.push_back(summarize(cf.policy_value(pi)));
    write_results(sensitivity_curve_table(in.family, bands), c.out(artifact::kSensitivity));
    write_counterfactual(c.out(artifact::kCounterfactual), cf);
    return {{artifact::kDiagnostics, artifact::kSensitivity, artifact::kCounterfactual},
            {{"max_rhat", fit.max_rhat}, {"divergences", fit.draws.divergences}, {"draws", cf.draws()}}};
  }

  const auto ks = c.sweep_k.empty() ? std::vector<std::size_t>{c.sensitivity.K} : c.sweep_k;
  const auto taus = c.sweep_sigma_tau.empty() ? std::vector<double>{c.sensitivity.sigma_tau} : c.sweep_sigma_tau;
  ResultsTable t({"K", "sigma_tau", "threshold", "release_rate", "q025", "q25", "q50", "q75", "q975", "max_rhat",
                  "divergences"});
  json diags = json::array();
  double worst = 0.0;
  for (auto k : ks) {
    for (double tau : taus) {
      SensitivitySpec spec = sensitivity_spec(c);
      spec.K = k;
      spec.sigma_tau = tau;
      const SensitivityFit fit = fit_sensitivity(in.eval, in.nz, spec);
      diags.push_back(fit_diagnostics(fit, spec));
      worst = std::max(worst, fit.max_rhat);
      const ConfoundModel model(in.eval, in.nz, fit.bins, spec);
      const auto cf = CounterfactualDraws::from_posterior(model, in.eval, fit.draws);
      for (const auto& pi : in.family) {
        const auto b = summarize(cf.policy_value(pi));
        t.add_row({static_cast<std::int64_t>(k), tau, pi.cutoff(), pi.release_rate(), b.q025, b.q25, b.q50, b.q75,
                   b.q975, fit.max_rhat, static_cast<std::int64_t>(fit.draws.divergences)});
      }
    }
  }
  spit(c.out(artifact::kDiagnostics), json{{"gate", c.rhat_gate}, {"fits", diags}}.dump(2) + "\n");
  if (gate_fails(c, worst)) {
    throw ConvergenceError("max R-hat " + format_double(worst) + " across the sweep exceeds the gate " +
                           format_double(c.rhat_gate) + "; see " + c.out(artifact::kDiagnostics).string());
  }
  write_results(t, c.out(artifact::kSensitivitySweep));
  return {{artifact::kDiagnostics, artifact::kSensitivitySweep},
          {{"fits", ks.size() * taus.size()}, {"max_rhat", worst}}};
}

CommandResult run_rr_sweep(const RunConfig& c) {
  const EvalInputs in = eval_inputs(c);
  std::vector<PolicyValueEstimate> direct;
  for (const auto& pi : in.family) direct.push_back(direct_policy_value(in.eval, pi, in.nz));
  const auto regimes = c.rr_regimes.empty() ? default_regimes() : c.rr_regimes;

  ResultsTable all;
  json flagged = json::array();
  for (std::size_t r = 0; r < regimes.size(); ++r) {
    const auto env = rr_sweep(in.eval, in.nz, in.family, regimes[r], worker_cap(c));
    const auto t = rr_envelope_table(in.family, direct, env, "regime_" + std::to_string(r + 1));
    if (all.columns.empty()) all.columns = t.columns;
    for (const auto& row : t.rows) all.add_row(row);
    std::size_t f = 0;
    for (const auto& e : env) f = std::max(f, e.flagged_units);
    flagged.push_back(f);
  }
  ensure_output_dir(c);
  write_results(all, c.out(artifact::kEnvelope));
  return {{artifact::kEnvelope}, {{"regimes", regimes.size()}, {"max_flagged_units", flagged}}};
}

CommandResult run_subgroup(const RunConfig& c) {
  const EvalInputs in = eval_inputs(c);
  require(c, artifact::kCounterfactual);
  const auto cf = read_counterfactual(c.out(artifact::kCounterfactual), in.eval);
  const auto truth = maybe_truth(c);

  // Subgroups need age, gender and prior FTA; fall back to the truth file when the data omits them.
  const bool has_all = in.eval.column_index("age") && in.eval.column_index("male") && in.eval.column_index("prior_fta");
  Dataset full;
  if (has_all) {
    full = in.eval;
  } else if (truth) {
    full = truth->base.subset(rows_of(truth->base, in.nz.ids));
  } else {
    throw SchemaError("subgroups need columns age, male and prior_fta; the dataset lacks them and no " +
                      std::string(artifact::kTruth) + " is present");
  }
  std::vector<double> y0, y1;
  const bool oracle = oracle_outcomes(truth, in.nz.ids, y0, y1);

  std::vector<std::string> cols{"group", "size", "direct_ate", "q025", "q50", "q975"};
  if (oracle) cols.push_back("oracle_ate");
  ResultsTable t(cols);
  const auto groups = default_subgroups(full);
  for (const auto& g : groups) {
    std::int64_t size = 0;
    double diff = 0.0;
    for (std::size_t i = 0; i < g.mask.size(); ++i) {
      if (!g.mask[i]) continue;
      ++size;
      if (oracle) diff += y1[i] - y0[i];
    }
    const double direct = subgroup_ate(in.eval.ids(), g.mask, [&](const Policy& pi) {
      return direct_policy_value(in.eval, pi, in.nz).value;
    });
    const auto b = summarize(cf.subgroup_ate(g.mask));
    std::vector<Cell> row{g.name, size, direct, b.q025, b.q50, b.q975};
    if (oracle) row.emplace_back(diff / static_cast<double>(size));
    t.add_row(std::move(row));
  }
  ensure_output_dir(c);
  write_results(t, c.out(artifact::kSubgroups));
  return {{artifact::kSubgroups}, {{"groups", groups.size()}, {"oracle_column", oracle}}};
}

CommandResult run_rank_check(const RunConfig& c) {
  require(c, artifact::kTruth);
  const SyntheticTruth truth = read_truth(c.out(artifact::kTruth));
  const auto keep = c.keep.empty() ? truth.base.schema() : c.keep;
  const auto grid = c.rank_grid();
  const RankingCurve curve = ranking_robustness(truth, keep, grid, cv_options(c));
  ensure_output_dir(c);
  write_results(ranking_table(curve), c.out(artifact::kRanking));
  return {{artifact::kRanking}, {{"covariates", keep}, {"max_gap", curve.max_gap()}}};
}

CommandResult run_validate(const RunConfig& c) {
  require(c, artifact::kTruth);
  const SyntheticTruth truth = read_truth(c.out(artifact::kTruth));
  const auto censorings = c.censorings.empty() ? default_censorings() : c.censorings;

  ValidationOptions opt;
  opt.eval_count = c.eval_count ? c.eval_count : opt.eval_count;
  opt.seed = c.seed;
  opt.policy_mode = c.policy_mode;
  opt.thresholds = c.thresholds;
  opt.cv = cv_options(c);
  opt.sensitivity = sensitivity_spec(c);
  opt.rr_regimes = c.rr_regimes;
  opt.threads = c.threads;
  if (c.threads) {
    const auto per = std::max<std::size_t>(1, c.threads / std::min<std::size_t>(c.threads, censorings.size()));
    opt.sensitivity.sampler.threads = std::min(per, opt.sensitivity.sampler.chains);
  }
  const ValidationReport report = run_validation_suite(truth, censorings, opt);

  json per = json::array();
  double worst = 0.0;
  for (const auto& r : report.censorings) {
    per.push_back({{"censoring", r.label},
                   {"coverage", r.coverage()},
                   {"mean_band_width", r.mean_band_width()},
                   {"max_rhat", r.max_rhat},
                   {"rhat_flag", r.rhat_flag},
                   {"divergences", r.divergences}});
    worst = std::max(worst, r.max_rhat);
  }
  const json summary{{"censorings", per}, {"subgroup_coverage", report.subgroup_coverage()}, {"gate", c.rhat_gate}};
  ensure_output_dir(c);
  spit(c.out(artifact::kValidationSummary), summary.dump(2) + "\n");
  if (gate_fails(c, worst)) {
    throw ConvergenceError("max R-hat " + format_double(worst) + " exceeds the gate " + format_double(c.rhat_gate) +
                           "; see " + c.out(artifact::kValidationSummary).string());
  }
  write_results(coverage_table(report), c.out(artifact::kCoverage));
  write_results(subgroup_table(report), c.out(artifact::kValidationSubgroups));
  return {{artifact::kValidationSummary, artifact::kCoverage, artifact::kValidationSubgroups}, summary};
}

CommandResult run_report(const RunConfig& c) {
  static const std::vector<std::string> required{artifact::kPolicies, artifact::kDirect, artifact::kSensitivity,
                                                 artifact::kEnvelope, artifact::kSubgroups};
  static const std::vector<std::string> optional{artifact::kSensitivitySweep, artifact::kRanking, artifact::kCoverage,
                                                 artifact::kValidationSubgroups};
  std::vector<std::string> missing;
  for (const auto& f : required) {
    if (!fs::exists(c.out(f))) missing.push_back(f + " (from `polsens " + artifact::producer(f) + "`)");
  }
  if (!missing.empty()) {
    std::string msg = "report needs artifacts that are absent from " + c.output_dir.string() + ":";
    for (const auto& m : missing) msg += " " + m;
    throw MissingArtifactError(msg);
  }

  ResultsTable t({"artifact", "row", "column", "value"});
  json artifacts = json::object();
  auto add = [&](const std::string& f) {
    const CsvTable csv = read_csv(c.out(f));
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      for (std::size_t k = 0; k < csv.header.size(); ++k) {
        t.add_row({f, static_cast<std::int64_t>(r), csv.header[k], csv.rows[r][k]});
      }
    }
    artifacts[f] = {{"rows", csv.rows.size()}, {"columns", csv.header}};
  };
  for (const auto& f : required) add(f);
  for (const auto& f : optional) {
    if (fs::exists(c.out(f))) add(f);
  }

  json summary{{"config_hash", c.hash()}, {"artifacts", artifacts}};
  if (fs::exists(c.out(artifact::kDiagnostics))) summary["diagnostics"] = json::parse(slurp(c.out(artifact::kDiagnostics)));
  if (fs::exists(c.out(artifact::kValidationSummary))) {
    summary["validation"] = json::parse(slurp(c.out(artifact::kValidationSummary)));
  }
  write_results(t, c.out(artifact::kReport));
  spit(c.out(artifact::kReportSummary), summary.dump(2) + "\n");
  return {{artifact::kReport, artifact::kReportSummary}, {{"artifacts", artifacts.size()}}};
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth",    "fit-nuisance", "policies",   "evaluate-direct", "sensitivity",
                                              "rr-sweep", "subgroup",     "rank-check", "validate",        "report"};
  return names;
}

CommandResult run_command(const std::string& command, const RunConfig& c) {
  c.validate();
  CommandResult res;
  if (command == "synth") res = run_synth(c);
  else if (command == "fit-nuisance") res = run_fit_nuisance(c);
  else if (command == "policies") res = run_policies(c);
  else if (command == "evaluate-direct") res = run_evaluate_direct(c);
  else if (command == "sensitivity") res = run_sensitivity(c);
  else if (command == "rr-sweep") res = run_rr_sweep(c);
  else if (command == "subgroup") res = run_subgroup(c);
  else if (command == "rank-check") res = run_rank_check(c);
  else if (command == "validate") res = run_validate(c);
  else if (command == "report") res = run_report(c);
  else throw ValidationError("unknown command " + command);

  json outputs = json::array();
  for (const auto& f : res.outputs) {
    const std::string bytes = slurp(c.out(f));
    outputs.push_back({{"file", f}, {"bytes", bytes.size()}, {"sha256", hex_sha256(bytes)}});
  }
  const json manifest{
      {"command", command},
      {"config_hash", c.hash()},
      {"config", c.to_json()},
      {"versions",
       {{"polsens", POLSENS_VERSION}, {"compiler", __VERSION__}, {"boost", BOOST_LIB_VERSION},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
      {"outputs", outputs},
      {"summary", res.summary},
      {"created", utc_now()},
  };
  spit(c.out("manifest_" + command + ".json"), manifest.dump(2) + "\n");
  return res;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const InsufficientDrawsError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const MissingArtifactError*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 2;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 4;
  return 1;
}

}  // namespace polsens::cli
