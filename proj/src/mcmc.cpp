#include "polsens/mcmc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "polsens/dataset.hpp"
#include "polsens/errors.hpp"

namespace polsens {
namespace {

constexpr double kDivergenceThreshold = 1000.0;

class DualAveraging {
 public:
  DualAveraging(double target) : target_(target) {}
  void restart(double step) {
    mu_ = std::log(10.0 * step);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  double update(double accept) {
    constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
    ++counter_;
    const double c = static_cast<double>(counter_);
    const double eta = 1.0 / (c + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept);
    const double x = mu_ - s_bar_ * std::sqrt(c) / kGamma;
    const double w = std::pow(c, -kKappa);
    x_bar_ = (1.0 - w) * x_bar_ + w * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar_); }

 private:
  double target_;
  double mu_ = 0.0;
  std::size_t counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

// Running mean and variance per coordinate.
class Welford {
 public:
  explicit Welford(std::size_t d) : mean_(d, 0.0), m2_(d, 0.0) {}
  void add(std::span<const double> q) {
    ++n_;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double delta = q[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (q[i] - mean_[i]);
    }
  }
  // Shrunk towards a small constant, as is conventional for short windows.
  std::vector<double> regularised_variance() const {
    const double n = static_cast<double>(n_);
    std::vector<double> v(mean_.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double var = n > 1 ? m2_[i] / (n - 1.0) : 1.0;
      v[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
    }
    return v;
  }
  void reset() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

void draw_momentum(PhasePoint& z, std::span<const double> inv_metric, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < z.p.size(); ++i) z.p[i] = normal(rng) / std::sqrt(inv_metric[i]);
}

double initial_step(const LogDensityModel& model, const PhasePoint& start,
                    std::span<const double> inv_metric, std::mt19937_64& rng) {
  double step = 1.0;
  const double log_target = std::log(0.8);
  auto trial = [&]() {
    PhasePoint z = start;
    draw_momentum(z, inv_metric, rng);
    const double h0 = hamiltonian(z, inv_metric);
    if (!leapfrog(model, z, inv_metric, step, 1)) return -std::numeric_limits<double>::infinity();
    const double dh = h0 - hamiltonian(z, inv_metric);
    return std::isfinite(dh) ? dh : -std::numeric_limits<double>::infinity();
  };
  const int direction = trial() > log_target ? 1 : -1;
  for (int k = 0; k < 60; ++k) {
    const double dh = trial();
    if (direction == 1 && !(dh > log_target)) break;
    if (direction == -1 && !(dh < log_target)) break;
    step = direction == 1 ? step * 2.0 : step * 0.5;
    if (step > 1e4 || step < 1e-12) break;
  }
  return step;
}

struct ChainOutput {
  std::vector<double> stored;
  ChainStats stats;
};

ChainOutput run_chain(const LogDensityModel& model, const SamplerConfig& cfg, std::size_t chain) {
  const std::size_t d = model.dimension;
  const std::size_t keep = cfg.stored_dimension == 0 ? d : std::min(cfg.stored_dimension, d);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(chain), 0x5a3cu};
  std::mt19937_64 rng(seq);

  PhasePoint z;
  z.q.resize(d);
  z.p.resize(d);
  z.grad.resize(d);
  bool ok = false;
  if (!cfg.init.empty()) {
    if (cfg.init.size() != d) throw InitializationError("initial point has the wrong dimension");
    z.q = cfg.init;
    ok = evaluate(model, z);
    if (!ok) throw InitializationError("log density is not finite at the supplied initial point");
  } else {
    std::uniform_real_distribution<double> init(-cfg.init_radius, cfg.init_radius);
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      for (auto& v : z.q) v = init(rng);
      ok = evaluate(model, z);
    }
    if (!ok) {
      throw InitializationError("log density not finite at 100 random initial points (chain " +
                                std::to_string(chain) + ")");
    }
  }

  std::vector<double> inv_metric(d, 1.0);
  double step = initial_step(model, z, inv_metric, rng);
  DualAveraging da(cfg.target_accept);
  da.restart(step);

  const std::size_t W = cfg.warmup;
  const bool adapt_metric = W >= 20;
  const std::size_t w_start = W * 15 / 100, w_mid = W / 2, w_end = W * 9 / 10;
  Welford window(d);

  ChainOutput out;
  out.stored.reserve(cfg.draws * keep);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double accept_sum = 0.0;

  for (std::size_t it = 0; it < W + cfg.draws; ++it) {
    const bool warming = it < W;
    const auto max_l = static_cast<std::size_t>(std::ceil(cfg.trajectory_length / step));
    const std::size_t l_max = std::clamp<std::size_t>(max_l, 1, cfg.max_steps);
    std::uniform_int_distribution<std::size_t> steps_dist(1, l_max);
    const std::size_t L = steps_dist(rng);

    draw_momentum(z, inv_metric, rng);
    const double h0 = hamiltonian(z, inv_metric);
    PhasePoint prop = z;
    const bool finite = leapfrog(model, prop, inv_metric, step, L);
    const double dh = finite ? hamiltonian(prop, inv_metric) - h0
                             : std::numeric_limits<double>::infinity();
    const bool divergent = !std::isfinite(dh) || dh > kDivergenceThreshold;
    const double accept = divergent ? 0.0 : std::min(1.0, std::exp(-dh));
    if (unif(rng) < accept) z = std::move(prop);

    if (warming) {
      step = da.update(accept);
      if (adapt_metric && it >= w_start && it < w_end) {
        window.add(z.q);
        if (it + 1 == w_mid || it + 1 == w_end) {
          inv_metric = window.regularised_variance();
          window.reset();
          step = initial_step(model, z, inv_metric, rng);
          da.restart(step);
        }
      }
      if (it + 1 == W) step = da.final_step();
    } else {
      accept_sum += accept;
      if (divergent) ++out.stats.divergences;
      out.stored.insert(out.stored.end(), z.q.begin(), z.q.begin() + static_cast<std::ptrdiff_t>(keep));
      if (cfg.on_draw) cfg.on_draw(chain, it - W, z.q);
    }
  }
  out.stats.step_size = step;
  out.stats.mean_accept = cfg.draws ? accept_sum / static_cast<double>(cfg.draws) : 0.0;
  out.stats.inv_metric = inv_metric;
  return out;
}

double inverse_normal_cdf(double p) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p); }

void require_shape(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InsufficientDrawsError("diagnostics need at least 2 chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw InsufficientDrawsError("chains differ in length");
  }
  if (n < 4) throw InsufficientDrawsError("diagnostics need at least 4 draws per chain");
}

std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  const std::size_t n = chains.front().size(), half = n / 2;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Replace values by normal scores of their pooled (average) ranks.
std::vector<std::vector<double>> rank_normalise(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  const std::size_t n = chains.front().size();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) all.emplace_back(chains[c][i], c * n + i);
  }
  std::sort(all.begin(), all.end());
  const double S = static_cast<double>(all.size());
  std::vector<std::vector<double>> out(chains.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < all.size();) {
    std::size_t j = k;
    while (j < all.size() && all[j].first == all[k].first) ++j;
    const double rank = 0.5 * static_cast<double>(k + 1 + j);  // average of ranks k+1..j
    const double z = inverse_normal_cdf((rank - 0.375) / (S + 0.25));
    for (std::size_t m = k; m < j; ++m) out[all[m].second / n][all[m].second % n] = z;
    k = j;
  }
  return out;
}

double chain_mean(const std::vector<double>& c) {
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

double chain_var(const std::vector<double>& c) {
  const double m = chain_mean(c);
  double s = 0.0;
  for (double v : c) s += (v - m) * (v - m);
  return s / static_cast<double>(c.size() - 1);
}

// Basic potential scale reduction on already split chains.
double psrf(const std::vector<std::vector<double>>& chains) {
  const double n = static_cast<double>(chains.front().size());
  const double m = static_cast<double>(chains.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    means.push_back(chain_mean(c));
    w += chain_var(c);
  }
  w /= m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b_over_n = 0.0;
  for (double v : means) b_over_n += (v - grand) * (v - grand);
  b_over_n /= (m - 1.0);
  if (!(w > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double ess_of(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<std::vector<double>> acov(m);
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    acov[c] = autocovariance(chains[c]);
    means[c] = chain_mean(chains[c]);
    vars[c] = acov[c][0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  const double mean_var = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
    double b = 0.0;
    for (double v : means) b += (v - grand) * (v - grand);
    var_plus += b / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  auto rho = [&](std::size_t t) {
    double a = 0.0;
    for (std::size_t c = 0; c < m; ++c) a += acov[c][t];
    return 1.0 - (mean_var - a / static_cast<double>(m)) / var_plus;
  };
  std::vector<double> rho_hat(n, 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0, rho_odd = rho(1);
  rho_hat[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && rho_even + rho_odd > 0.0) {
    rho_even = rho(t + 1);
    rho_odd = rho(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[t + 1] = rho_even;
      rho_hat[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0 && max_t + 1 < n) rho_hat[max_t + 1] = rho_even;
  // Initial monotone sequence.
  for (t = 1; t + 4 <= max_t; t += 2) {
    if (rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]) {
      rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
      rho_hat[t + 2] = rho_hat[t + 1];
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0;
  for (std::size_t k = 0; k <= max_t && k < n; ++k) tau += 2.0 * rho_hat[k];
  if (max_t + 1 < n) tau += rho_hat[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

void write_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw IoError("truncated draws file");
  return v;
}
std::vector<double> read_doubles(std::ifstream& in) {
  std::vector<double> v(read_u64(in));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
  if (!in) throw IoError("truncated draws file");
  return v;
}

constexpr char kDrawsMagic[8] = {'P', 'S', 'D', 'R', 'A', 'W', 'S', '1'};

}  // namespace

bool evaluate(const LogDensityModel& model, PhasePoint& z) {
  z.logp = model.value_and_gradient(z.q, z.grad);
  if (!std::isfinite(z.logp)) return false;
  for (double g : z.grad) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

bool leapfrog(const LogDensityModel& model, PhasePoint& z, std::span<const double> inv_metric,
              double step, std::size_t steps) {
  const std::size_t d = z.q.size();
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * step * z.grad[i];
    for (std::size_t i = 0; i < d; ++i) z.q[i] += step * inv_metric[i] * z.p[i];
    if (!evaluate(model, z)) return false;
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * step * z.grad[i];
  }
  return true;
}

double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  double k = 0.0;
  for (std::size_t i = 0; i < z.p.size(); ++i) k += inv_metric[i] * z.p[i] * z.p[i];
  return -z.logp + 0.5 * k;
}

std::vector<double> autocovariance(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double* buf = fftw_alloc_real(len);
  fftw_complex* spec = fftw_alloc_complex(len / 2 + 1);
  fftw_plan fwd, inv;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(len), buf, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(len), spec, buf, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < len; ++i) buf[i] = i < n ? x[i] - mean : 0.0;
  fftw_execute(fwd);
  for (std::size_t k = 0; k < len / 2 + 1; ++k) {
    spec[k][0] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    spec[k][1] = 0.0;
  }
  fftw_execute(inv);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = buf[t] / static_cast<double>(len) / static_cast<double>(n);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(spec);
  return out;
}

double split_rhat_basic(const std::vector<std::vector<double>>& chains) {
  require_shape(chains);
  return psrf(split_chains(chains));
}

double rhat(const std::vector<std::vector<double>>& chains) {
  require_shape(chains);
  const auto split = split_chains(chains);
  const double bulk = psrf(rank_normalise(split));
  std::vector<double> pooled;
  for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2), pooled.end());
  double median = pooled[pooled.size() / 2];
  if (pooled.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2)));
  }
  auto folded = split;
  for (auto& c : folded) {
    for (auto& v : c) v = std::abs(v - median);
  }
  const double tail = psrf(rank_normalise(folded));
  if (std::isnan(bulk) || std::isnan(tail)) return std::numeric_limits<double>::quiet_NaN();
  return std::max(bulk, tail);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
  require_shape(chains);
  const auto z = rank_normalise(split_chains(chains));
  for (const auto& c : z) {
    if (chain_var(c) > 0.0) return ess_of(z);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<std::vector<double>> PosteriorDraws::parameter(std::size_t d) const {
  std::vector<std::vector<double>> out(chains, std::vector<double>(iterations));
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t i = 0; i < iterations; ++i) out[c][i] = at(c, i, d);
  }
  return out;
}

std::vector<double> PosteriorDraws::pooled(std::size_t d) const {
  std::vector<double> out;
  out.reserve(chains * iterations);
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t i = 0; i < iterations; ++i) out.push_back(at(c, i, d));
  }
  return out;
}

double PosteriorDraws::max_rhat() const {
  double m = 0.0;
  for (double r : rhat) {
    if (std::isnan(r)) return r;
    m = std::max(m, r);
  }
  return m;
}

double PosteriorDraws::min_ess() const {
  double m = std::numeric_limits<double>::infinity();
  for (double e : ess) m = std::min(m, e);
  return m;
}

void compute_diagnostics(PosteriorDraws& draws) {
  draws.rhat.assign(draws.dimension, std::numeric_limits<double>::quiet_NaN());
  draws.ess.assign(draws.dimension, std::numeric_limits<double>::quiet_NaN());
  if (draws.chains < 2 || draws.iterations < 4) return;
  for (std::size_t d = 0; d < draws.dimension; ++d) {
    const auto ch = draws.parameter(d);
    draws.rhat[d] = rhat(ch);
    draws.ess[d] = ess_bulk(ch);
  }
}

PosteriorDraws sample(const LogDensityModel& model, const SamplerConfig& config) {
  if (model.dimension == 0) throw DomainError("model dimension must be at least 1");
  if (config.chains == 0) throw DomainError("need at least one chain");
  if (!(config.target_accept > 0.0 && config.target_accept < 1.0)) {
    throw DomainError("target acceptance must lie in (0, 1)");
  }
  if (!(config.trajectory_length > 0.0)) throw DomainError("trajectory length must be positive");
  const std::size_t keep = config.stored_dimension == 0
                               ? model.dimension
                               : std::min(config.stored_dimension, model.dimension);

  std::vector<ChainOutput> outputs(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  const std::size_t workers = config.threads == 0 ? config.chains : std::max<std::size_t>(1, config.threads);
  for (std::size_t first = 0; first < config.chains; first += workers) {
    std::vector<std::thread> pool;
    const std::size_t last = std::min(config.chains, first + workers);
    for (std::size_t c = first; c < last; ++c) {
      pool.emplace_back([&, c] {
        try {
          outputs[c] = run_chain(model, config, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorDraws draws;
  draws.chains = config.chains;
  draws.iterations = config.draws;
  draws.dimension = keep;
  draws.names = model.parameter_names;
  draws.names.resize(keep);
  for (std::size_t d = 0; d < keep; ++d) {
    if (draws.names[d].empty()) draws.names[d] = "q" + std::to_string(d);
  }
  draws.values.reserve(config.chains * config.draws * keep);
  for (auto& o : outputs) {
    draws.values.insert(draws.values.end(), o.stored.begin(), o.stored.end());
    draws.divergences += o.stats.divergences;
    draws.stats.push_back(std::move(o.stats));
  }
  const double transitions = static_cast<double>(config.chains * config.draws);
  draws.divergence_flag = transitions > 0 && static_cast<double>(draws.divergences) > 0.01 * transitions;
  compute_diagnostics(draws);
  return draws;
}

GradientCheck check_gradient(const LogDensityModel& model, std::span<const double> point,
                             double step) {
  const std::size_t d = model.dimension;
  std::vector<double> q(point.begin(), point.end()), grad(d), scratch(d);
  model.value_and_gradient(q, grad);
  GradientCheck out;
  for (std::size_t i = 0; i < d; ++i) {
    const double orig = q[i];
    q[i] = orig + step;
    const double up = model.value_and_gradient(q, scratch);
    q[i] = orig - step;
    const double down = model.value_and_gradient(q, scratch);
    q[i] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double err = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1.0});
    if (!(err <= out.max_error)) {
      out.max_error = err;
      out.worst_index = i;
    }
  }
  return out;
}

void save_draws(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write draws file " + path.string());
  out.write(kDrawsMagic, 8);
  write_u64(out, draws.chains);
  write_u64(out, draws.iterations);
  write_u64(out, draws.dimension);
  write_u64(out, draws.divergences);
  write_u64(out, draws.divergence_flag ? 1 : 0);
  write_u64(out, draws.names.size());
  for (const auto& n : draws.names) {
    write_u64(out, n.size());
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
  }
  write_doubles(out, draws.values);
  write_doubles(out, draws.rhat);
  write_doubles(out, draws.ess);
  write_u64(out, draws.stats.size());
  for (const auto& s : draws.stats) {
    write_doubles(out, {s.step_size, s.mean_accept, static_cast<double>(s.divergences)});
    write_doubles(out, s.inv_metric);
  }
  if (!out) throw IoError("failed writing draws file " + path.string());
}

PosteriorDraws load_draws(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("draws file not found: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kDrawsMagic)) throw IoError("not a draws file: " + path.string());
  PosteriorDraws d;
  d.chains = read_u64(in);
  d.iterations = read_u64(in);
  d.dimension = read_u64(in);
  d.divergences = read_u64(in);
  d.divergence_flag = read_u64(in) != 0;
  d.names.resize(read_u64(in));
  for (auto& n : d.names) {
    n.resize(read_u64(in));
    in.read(n.data(), static_cast<std::streamsize>(n.size()));
  }
  d.values = read_doubles(in);
  d.rhat = read_doubles(in);
  d.ess = read_doubles(in);
  d.stats.resize(read_u64(in));
  for (auto& s : d.stats) {
    const auto v = read_doubles(in);
    if (v.size() != 3) throw IoError("corrupt chain statistics in draws file");
    s.step_size = v[0];
    s.mean_accept = v[1];
    s.divergences = static_cast<std::size_t>(v[2]);
    s.inv_metric = read_doubles(in);
  }
  if (d.values.size() != d.chains * d.iterations * d.dimension) throw IoError("draws file has inconsistent sizes");
  return d;
}

void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path) {
  ResultsTable t({"chain", "iteration", "parameter", "value"});
  for (std::size_t c = 0; c < draws.chains; ++c) {
    for (std::size_t i = 0; i < draws.iterations; ++i) {
      for (std::size_t d = 0; d < draws.dimension; ++d) {
        t.add_row({static_cast<std::int64_t>(c), static_cast<std::int64_t>(i), draws.names[d], draws.at(c, i, d)});
      }
    }
  }
  write_results(t, path);
}

}  // namespace polsens
