#pragma once

// Static-trajectory Hamiltonian Monte Carlo with a jittered step count,
// dual-averaging step size and diagonal metric adaptation, plus split-chain
// rank-normalised diagnostics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace polsens {

struct LogDensityModel {
  std::size_t dimension = 0;
  // Returns the log density (up to a constant) and writes its gradient.
  // Must be safe to call concurrently from several chains.
  std::function<double(std::span<const double> q, std::span<double> grad)> value_and_gradient;
  std::vector<std::string> parameter_names;  // may be empty
};

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t warmup = 1000;
  std::size_t draws = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  // Integration time in metric-scaled units; the step count is drawn
  // uniformly from [1, ceil(trajectory_length / step)].
  double trajectory_length = std::numbers::pi;
  std::size_t max_steps = 256;
  double init_radius = 2.0;
  std::vector<double> init;  // optional fixed start shared by all chains
  std::size_t threads = 0;   // 0: one thread per chain
  // Only the first `stored_dimension` coordinates are kept (0: all).
  std::size_t stored_dimension = 0;
  // Called for every post-warmup draw with the full state vector.
  std::function<void(std::size_t chain, std::size_t iteration, std::span<const double> q)> on_draw;
};

struct ChainStats {
  double step_size = 0.0;
  double mean_accept = 0.0;
  std::size_t divergences = 0;
  std::vector<double> inv_metric;
};

struct PosteriorDraws {
  std::size_t chains = 0;
  std::size_t iterations = 0;
  std::size_t dimension = 0;  // stored coordinates per draw
  std::vector<std::string> names;
  std::vector<double> values;  // [chain][iteration][coordinate]
  std::vector<ChainStats> stats;
  std::size_t divergences = 0;
  bool divergence_flag = false;  // more than 1% of transitions diverged
  std::vector<double> rhat;
  std::vector<double> ess;

  double at(std::size_t c, std::size_t it, std::size_t d) const {
    return values[(c * iterations + it) * dimension + d];
  }
  // chains x iterations for one coordinate.
  std::vector<std::vector<double>> parameter(std::size_t d) const;
  // All draws of one coordinate, chain after chain.
  std::vector<double> pooled(std::size_t d) const;
  double max_rhat() const;
  double min_ess() const;
};

PosteriorDraws sample(const LogDensityModel& model, const SamplerConfig& config);

struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double logp = 0.0;
};

// Evaluates logp and grad at q. Returns false if either is non-finite.
bool evaluate(const LogDensityModel& model, PhasePoint& z);
// `steps` leapfrog steps in place; returns false on a non-finite state.
bool leapfrog(const LogDensityModel& model, PhasePoint& z, std::span<const double> inv_metric,
              double step, std::size_t steps);
double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric);

// Per-parameter diagnostics over chains (each inner vector one chain).
// R-hat is the larger of the rank-normalised and folded split-chain values;
// NaN when the pooled draws have zero within-chain variance.
double rhat(const std::vector<std::vector<double>>& chains);
double ess_bulk(const std::vector<std::vector<double>>& chains);
// Plain split R-hat without rank normalisation.
double split_rhat_basic(const std::vector<std::vector<double>>& chains);
// Autocovariance at lags 0..n-1 (biased, divide by n) via FFT.
std::vector<double> autocovariance(std::span<const double> x);

void compute_diagnostics(PosteriorDraws& draws);

struct GradientCheck {
  double max_error = 0.0;
  std::size_t worst_index = 0;
};

// Central differences per coordinate; error is |a - fd| / max(|a|, |fd|, 1).
GradientCheck check_gradient(const LogDensityModel& model, std::span<const double> point,
                             double step = 1e-6);

// Binary round trip of stored draws and their diagnostics.
void save_draws(const PosteriorDraws& draws, const std::filesystem::path& path);
PosteriorDraws load_draws(const std::filesystem::path& path);
// Long format: chain, iteration, parameter, value.
void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path);

}  // namespace polsens
