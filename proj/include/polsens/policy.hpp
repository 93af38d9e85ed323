#pragma once

// Deterministic treatment rules over a fixed list of units, the direct
// (outcome-model) policy value estimator, and subgroup effects expressed as a
// difference of two policy values.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "polsens/dataset.hpp"
#include "polsens/errors.hpp"
#include "polsens/glm.hpp"

namespace polsens {

struct RiskScores {
  std::vector<UnitId> ids;
  std::vector<double> scores;
};
using RiskScoresPtr = std::shared_ptr<const RiskScores>;

// Validates lengths and that every score is a probability.
RiskScoresPtr make_scores(std::vector<UnitId> ids, std::vector<double> scores);

enum class PolicyMode { kAbsolute, kQuantile, kExplicit };

class Policy {
 public:
  // Treat iff score > s.
  static Policy absolute(RiskScoresPtr scores, double s);
  // Release the floor(p n) lowest-scoring units, ties by ascending id.
  static Policy quantile(RiskScoresPtr scores, double p);
  static Policy from_decisions(std::vector<UnitId> ids, std::vector<std::uint8_t> treat);
  static Policy treat_none(std::span<const UnitId> ids);
  static Policy treat_all(std::span<const UnitId> ids);

  PolicyMode mode() const { return mode_; }
  double cutoff() const { return cutoff_; }
  // Score threshold actually applied; -inf when a quantile policy releases no one.
  double effective_threshold() const { return effective_; }
  std::size_t size() const { return treat_.size(); }
  std::span<const UnitId> ids() const { return *ids_; }
  std::span<const std::uint8_t> decisions() const { return treat_; }
  bool treats(std::size_t i) const { return treat_[i] != 0; }
  std::size_t released() const { return released_; }
  double release_rate() const {
    return treat_.empty() ? 0.0 : static_cast<double>(released_) / static_cast<double>(treat_.size());
  }
  const RiskScoresPtr& scores() const { return scores_; }

 private:
  Policy() = default;
  void count();

  PolicyMode mode_ = PolicyMode::kExplicit;
  double cutoff_ = 0.0;
  double effective_ = 0.0;
  RiskScoresPtr scores_;
  std::shared_ptr<const std::vector<UnitId>> ids_;
  std::vector<std::uint8_t> treat_;
  std::size_t released_ = 0;
};

// One absolute-threshold policy per threshold, in ascending threshold order.
std::vector<Policy> make_policy_family(const RiskScoresPtr& scores,
                                       std::vector<double> thresholds);

// Throws AlignmentError unless the policy covers exactly the dataset's ids in order.
void check_aligned(const Dataset& d, const Policy& pi);

struct PolicyValueEstimate {
  double value = 0.0;
  std::size_t n_agree = 0;
  std::size_t n_disagree = 0;
  double release_rate = 0.0;
};

PolicyValueEstimate direct_policy_value(const Dataset& d, const Policy& pi,
                                        const NuisanceEstimates& nz);

// Mean of the stored potential outcome each unit would receive under pi.
double oracle_policy_value(std::span<const double> y0, std::span<const double> y1,
                           const Policy& pi);

// Indicator vector for the rows of d that satisfy pred(row).
template <class Pred>
std::vector<std::uint8_t> group_mask(const Dataset& d, Pred&& pred) {
  std::vector<std::uint8_t> m(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m[i] = pred(i) ? 1 : 0;
  return m;
}

// (value(pi_G) - value(pi_none)) / (|G| / n), where pi_G treats exactly the
// units in G. value_fn may return a double or a vector of doubles (one per
// posterior draw); the difference is taken elementwise.
template <class ValueFn>
auto subgroup_ate(std::span<const UnitId> ids, std::span<const std::uint8_t> in_group,
                  ValueFn&& value_fn) {
  if (ids.size() != in_group.size()) throw AlignmentError("group mask length does not match units");
  std::size_t g = 0;
  for (auto v : in_group) g += v != 0;
  if (g == 0) throw EmptyGroupError("subgroup is empty");
  const Policy pi_g = Policy::from_decisions(std::vector<UnitId>(ids.begin(), ids.end()),
                                             std::vector<std::uint8_t>(in_group.begin(), in_group.end()));
  const Policy pi_none = Policy::treat_none(ids);
  const double share = static_cast<double>(g) / static_cast<double>(ids.size());
  auto vg = value_fn(pi_g);
  auto v0 = value_fn(pi_none);
  if constexpr (std::is_arithmetic_v<decltype(vg)>) {
    return (vg - v0) / share;
  } else {
    if (vg.size() != v0.size()) throw AlignmentError("value functional returned mismatched draws");
    for (std::size_t k = 0; k < vg.size(); ++k) vg[k] = (vg[k] - v0[k]) / share;
    return vg;
  }
}

// Columns (threshold, release_rate, direct_value[, oracle_value]).
ResultsTable policy_curve_table(const std::vector<Policy>& family,
                                const std::vector<PolicyValueEstimate>& direct,
                                const std::optional<std::vector<double>>& oracle = std::nullopt);

}  // namespace polsens
