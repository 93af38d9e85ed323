#include "polsens/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace polsens {

RiskScoresPtr make_scores(std::vector<UnitId> ids, std::vector<double> scores) {
  if (ids.size() != scores.size()) throw AlignmentError("risk scores and ids differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw DomainError("risk score for unit " + std::to_string(ids[i]) + " is not a probability");
    }
  }
  auto out = std::make_shared<RiskScores>();
  out->ids = std::move(ids);
  out->scores = std::move(scores);
  return out;
}

void Policy::count() {
  released_ = static_cast<std::size_t>(std::count(treat_.begin(), treat_.end(), 0));
}

Policy Policy::absolute(RiskScoresPtr scores, double s) {
  if (!scores) throw DomainError("policy needs risk scores");
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("absolute threshold must lie in [0, 1]");
  Policy p;
  p.mode_ = PolicyMode::kAbsolute;
  p.cutoff_ = s;
  p.effective_ = s;
  p.ids_ = std::shared_ptr<const std::vector<UnitId>>(scores, &scores->ids);
  p.treat_.resize(scores->scores.size());
  for (std::size_t i = 0; i < p.treat_.size(); ++i) p.treat_[i] = scores->scores[i] > s;
  p.scores_ = std::move(scores);
  p.count();
  return p;
}

Policy Policy::quantile(RiskScoresPtr scores, double q) {
  if (!scores) throw DomainError("policy needs risk scores");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile must lie in [0, 1]");
  const std::size_t n = scores->scores.size();
  const auto m = static_cast<std::size_t>(std::floor(q * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& sc = scores->scores;
  const auto& id = scores->ids;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sc[a] != sc[b] ? sc[a] < sc[b] : id[a] < id[b];
  });
  Policy p;
  p.mode_ = PolicyMode::kQuantile;
  p.cutoff_ = q;
  p.effective_ = m == 0 ? -std::numeric_limits<double>::infinity() : sc[order[m - 1]];
  p.ids_ = std::shared_ptr<const std::vector<UnitId>>(scores, &scores->ids);
  p.treat_.assign(n, 1);
  for (std::size_t k = 0; k < m; ++k) p.treat_[order[k]] = 0;
  p.scores_ = std::move(scores);
  p.count();
  return p;
}

Policy Policy::from_decisions(std::vector<UnitId> ids, std::vector<std::uint8_t> treat) {
  if (ids.size() != treat.size()) throw AlignmentError("decisions and ids differ in length");
  Policy p;
  p.mode_ = PolicyMode::kExplicit;
  p.ids_ = std::make_shared<const std::vector<UnitId>>(std::move(ids));
  p.treat_ = std::move(treat);
  for (auto& t : p.treat_) t = t != 0;
  p.count();
  return p;
}

Policy Policy::treat_none(std::span<const UnitId> ids) {
  return from_decisions({ids.begin(), ids.end()}, std::vector<std::uint8_t>(ids.size(), 0));
}

Policy Policy::treat_all(std::span<const UnitId> ids) {
  return from_decisions({ids.begin(), ids.end()}, std::vector<std::uint8_t>(ids.size(), 1));
}

std::vector<Policy> make_policy_family(const RiskScoresPtr& scores,
                                       std::vector<double> thresholds) {
  if (thresholds.empty()) throw DomainError("policy family needs at least one threshold");
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<Policy> family;
  family.reserve(thresholds.size());
  for (double s : thresholds) family.push_back(Policy::absolute(scores, s));
  return family;
}

void check_aligned(const Dataset& d, const Policy& pi) {
  if (pi.size() != d.size()) throw AlignmentError("policy covers a different number of units than the dataset");
  const auto ids = pi.ids();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (ids[i] != d.id(i)) {
      throw AlignmentError("policy unit order differs from the dataset at row " + std::to_string(i + 1));
    }
  }
}

PolicyValueEstimate direct_policy_value(const Dataset& d, const Policy& pi,
                                        const NuisanceEstimates& nz) {
  check_aligned(d, nz);
  check_aligned(d, pi);
  PolicyValueEstimate est;
  const auto t = d.treatment();
  const auto y = d.outcome();
  double observed = 0.0, imputed = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool treat = pi.treats(i);
    if (treat == (t[i] != 0.0)) {
      observed += y[i];
      ++est.n_agree;
    } else {
      imputed += treat ? nz.mu1_hat[i] : nz.mu0_hat[i];
      ++est.n_disagree;
    }
  }
  est.value = d.size() ? (observed + imputed) / static_cast<double>(d.size()) : 0.0;
  est.release_rate = pi.release_rate();
  return est;
}

double oracle_policy_value(std::span<const double> y0, std::span<const double> y1,
                           const Policy& pi) {
  if (y0.size() != pi.size() || y1.size() != pi.size()) {
    throw AlignmentError("potential outcomes do not match the policy's units");
  }
  if (pi.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) s += pi.treats(i) ? y1[i] : y0[i];
  return s / static_cast<double>(pi.size());
}

ResultsTable policy_curve_table(const std::vector<Policy>& family,
                                const std::vector<PolicyValueEstimate>& direct,
                                const std::optional<std::vector<double>>& oracle) {
  if (direct.size() != family.size() || (oracle && oracle->size() != family.size())) {
    throw AlignmentError("policy curve columns differ in length");
  }
  std::vector<std::string> cols{"threshold", "release_rate", "direct_value"};
  if (oracle) cols.push_back("oracle_value");
  ResultsTable t(cols);
  for (std::size_t k = 0; k < family.size(); ++k) {
    std::vector<Cell> row{family[k].cutoff(), family[k].release_rate(), direct[k].value};
    if (oracle) row.push_back((*oracle)[k]);
    t.add_row(std::move(row));
  }
  return t;
}

}  // namespace polsens
