#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "disco/error.hpp"
#include "disco/rng.hpp"

// Rectified-flow laboratory with an analytic Gaussian data distribution.
//
// x_t = (1 - t) x_0 + t x_1 with x_0 ~ N(mu0, s0^2 I) and x_1 ~ N(0, I), so the
// marginal p_t is Gaussian and velocity and score are available in closed form.
// Sampling runs from t = 1 (noise) to t = 0 (data).

namespace disco::flow {

struct GaussianWorld {
  std::vector<double> mu0;
  double s0 = 1.0;

  std::size_t dim() const noexcept { return mu0.size(); }

  static GaussianWorld isotropic(std::size_t dim, double mean, double s0) {
    return GaussianWorld{std::vector<double>(dim, mean), s0};
  }
};

struct AnalyticMarginal {
  std::vector<double> mean_t;
  double var_t = 1.0;
};

inline AnalyticMarginal marginal(double t, const GaussianWorld& w) {
  AnalyticMarginal m;
  m.mean_t.resize(w.dim());
  for (std::size_t i = 0; i < w.dim(); ++i) m.mean_t[i] = (1.0 - t) * w.mu0[i];
  m.var_t = (1.0 - t) * (1.0 - t) * w.s0 * w.s0 + t * t;
  return m;
}

/// sigma(t) for the stochastic sampler.
struct SigmaSchedule {
  enum class Kind { constant, sqrt_t, linear_t };
  Kind kind = Kind::constant;
  double scale = 0.0;

  double operator()(double t) const noexcept {
    switch (kind) {
      case Kind::constant: return scale;
      case Kind::sqrt_t: return scale * std::sqrt(std::max(t, 0.0));
      case Kind::linear_t: return scale * t;
    }
    return scale;
  }

  static SigmaSchedule constant(double s) { return {Kind::constant, s}; }
  static SigmaSchedule sqrt_t(double s = 1.0) { return {Kind::sqrt_t, s}; }
  static SigmaSchedule linear_t(double s = 1.0) { return {Kind::linear_t, s}; }

  /// Accepts "constant:<s>", "sqrt:<s>", "linear:<s>" or a bare number.
  static SigmaSchedule parse(const std::string& spec) {
    const auto colon = spec.find(':');
    try {
      if (colon == std::string::npos) return constant(std::stod(spec));
      const std::string name = spec.substr(0, colon);
      const double s = std::stod(spec.substr(colon + 1));
      if (name == "constant") return constant(s);
      if (name == "sqrt") return sqrt_t(s);
      if (name == "linear") return linear_t(s);
    } catch (const std::logic_error&) {
    }
    throw InvalidArgument("unknown sigma schedule '" + spec + "'");
  }

  std::string name() const {
    switch (kind) {
      case Kind::constant: return "constant:" + std::to_string(scale);
      case Kind::sqrt_t: return "sqrt:" + std::to_string(scale);
      case Kind::linear_t: return "linear:" + std::to_string(scale);
    }
    return "?";
  }
};

/// Decreasing time grid 1 = t_0 > ... > t_K = 0.
struct SamplerGrid {
  std::vector<double> times;
  SigmaSchedule sigma;

  std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }

  static SamplerGrid uniform(std::size_t steps, SigmaSchedule sigma = {}) {
    if (steps < 1) throw InvalidArgument("sampler grid needs at least one step");
    SamplerGrid g;
    g.sigma = sigma;
    g.times.resize(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
      g.times[k] = 1.0 - static_cast<double>(k) / static_cast<double>(steps);
    g.times.front() = 1.0;
    g.times.back() = 0.0;
    return g;
  }
};

using Vec = std::vector<double>;

inline constexpr double kMinVariance = 1e-12;

/// E[x_1 - x_0 | x_t = x]; linear in x by Gaussian conditioning.
inline Vec velocity_field(std::span<const double> x, double t, const GaussianWorld& w) {
  if (x.size() != w.dim()) throw DimensionMismatch(x.size(), w.dim());
  const auto m = marginal(t, w);
  if (m.var_t <= kMinVariance) throw DegenerateVariance(t);
  const double gain = (t - (1.0 - t) * w.s0 * w.s0) / m.var_t;
  Vec v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = -w.mu0[i] + gain * (x[i] - m.mean_t[i]);
  return v;
}

/// grad_x log p_t(x).
inline Vec score(std::span<const double> x, double t, const GaussianWorld& w) {
  if (x.size() != w.dim()) throw DimensionMismatch(x.size(), w.dim());
  const auto m = marginal(t, w);
  if (m.var_t <= kMinVariance) throw DegenerateVariance(t);
  Vec s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = -(x[i] - m.mean_t[i]) / m.var_t;
  return s;
}

/// Forward-time drift f = v + sigma^2/2 * score of the marginal-matching SDE
/// dx = f dt + sigma dw.
inline Vec sde_drift(std::span<const double> x, double t, const GaussianWorld& w, double sigma) {
  auto f = velocity_field(x, t, w);
  if (sigma == 0.0) return f;
  const auto s = score(x, t, w);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += 0.5 * sigma * sigma * s[i];
  return f;
}

/// Drift of the same SDE run backwards in time (t decreasing):
/// f - sigma^2 * score = v - sigma^2/2 * score. Multiply by the negative dt.
inline Vec reverse_drift(std::span<const double> x, double t, const GaussianWorld& w, double sigma) {
  auto f = sde_drift(x, t, w, sigma);
  if (sigma == 0.0) return f;
  const auto s = score(x, t, w);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] -= sigma * sigma * s[i];
  return f;
}

/// Mean of the Euler-Maruyama transition from t_curr to t_next < t_curr.
inline Vec transition_mean(std::span<const double> x_curr, double t_curr, double t_next, const GaussianWorld& w,
                           double sigma) {
  const double dt = t_next - t_curr;
  const auto b = reverse_drift(x_curr, t_curr, w, sigma);
  Vec m(x_curr.begin(), x_curr.end());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += dt * b[i];
  return m;
}

/// log N(x_next; transition_mean, sigma(t_curr)^2 |dt| I).
inline double transition_log_prob(std::span<const double> x_next, std::span<const double> x_curr, double t_curr,
                                  double t_next, const GaussianWorld& w, const SigmaSchedule& schedule) {
  const double sigma = schedule(t_curr);
  if (sigma == 0.0) throw ZeroNoise();
  if (x_next.size() != x_curr.size()) throw DimensionMismatch(x_next.size(), x_curr.size());
  const double var = sigma * sigma * std::abs(t_next - t_curr);
  const auto m = transition_mean(x_curr, t_curr, t_next, w, sigma);
  double q = 0;
  for (std::size_t i = 0; i < m.size(); ++i) q += (x_next[i] - m[i]) * (x_next[i] - m[i]);
  const double d = static_cast<double>(m.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) - 0.5 * q / var;
}

/// KL between the transitions that two worlds induce from the same state; both
/// are Gaussians sharing the covariance sigma^2 |dt| I.
inline double transition_kl(std::span<const double> x_curr, double t_curr, double t_next, const GaussianWorld& a,
                            const GaussianWorld& b, const SigmaSchedule& schedule) {
  const double sigma = schedule(t_curr);
  if (sigma == 0.0) throw ZeroNoise();
  const double var = sigma * sigma * std::abs(t_next - t_curr);
  const auto ma = transition_mean(x_curr, t_curr, t_next, a, sigma);
  const auto mb = transition_mean(x_curr, t_curr, t_next, b, sigma);
  double q = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) q += (ma[i] - mb[i]) * (ma[i] - mb[i]);
  return 0.5 * q / var;
}

enum class Mode { ode, sde };

/// One sampled path: states at every grid time and the summed transition log-prob.
struct Path {
  std::vector<Vec> states;
  double log_prob = 0;  // 0 in ODE mode
};

/// Integrates one path from fresh N(0, I) noise; calls visit(k, state) at every
/// grid index k and returns the summed transition log-prob (0 in ODE mode).
template <class Visit>
double integrate(const GaussianWorld& w, const SamplerGrid& grid, Mode mode, Engine& engine, Visit&& visit) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double log_prob = 0;
  Vec x(w.dim());
  for (double& xi : x) xi = normal(engine);
  visit(std::size_t{0}, x);
  for (std::size_t k = 0; k + 1 < grid.times.size(); ++k) {
    const double t = grid.times[k];
    const double t_next = grid.times[k + 1];
    const double sigma = mode == Mode::sde ? grid.sigma(t) : 0.0;
    Vec next = transition_mean(x, t, t_next, w, sigma);
    if (sigma > 0.0) {
      const double sd = sigma * std::sqrt(t - t_next);
      for (double& xi : next) xi += sd * normal(engine);
      log_prob += transition_log_prob(next, x, t, t_next, w, grid.sigma);
    }
    x = std::move(next);
    visit(k + 1, x);
  }
  return log_prob;
}

inline Path sample_path(const GaussianWorld& w, const SamplerGrid& grid, Mode mode, Engine& engine) {
  Path p;
  p.states.reserve(grid.times.size());
  p.log_prob = integrate(w, grid, mode, engine, [&](std::size_t, const Vec& x) { p.states.push_back(x); });
  return p;
}

/// Samples at requested checkpoint times; row-major, one row per path.
struct Snapshot {
  double t = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t paths() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

struct SimulationResult {
  std::vector<Snapshot> snapshots;
};

/// Euler (ODE) or Euler-Maruyama (SDE) integration from t=1 noise to t=0.
/// Each path draws from its own substream of `seed`, so output is identical for
/// any worker count. `checkpoints` must be grid times; t=0 is always included last.
inline SimulationResult simulate(const GaussianWorld& w, const SamplerGrid& grid, std::size_t n_paths, Mode mode,
                                 std::uint64_t seed, std::vector<double> checkpoints = {}, std::size_t workers = 1) {
  if (n_paths < 1) throw InvalidArgument("simulate needs n_paths >= 1");
  std::vector<std::size_t> at;
  for (double c : checkpoints) {
    std::size_t found = grid.times.size();
    for (std::size_t k = 0; k < grid.times.size(); ++k)
      if (std::abs(grid.times[k] - c) < 1e-9) found = k;
    if (found == grid.times.size()) throw InvalidArgument("checkpoint t=" + std::to_string(c) + " is not on the grid");
    at.push_back(found);
  }
  if (at.empty() || at.back() != grid.steps()) at.push_back(grid.steps());

  SimulationResult r;
  for (std::size_t k : at) r.snapshots.push_back(Snapshot{grid.times[k], w.dim(), std::vector<double>(n_paths * w.dim())});

  parallel_for(n_paths, workers, [&](std::size_t path) {
    Engine eng = substream(seed, path);
    integrate(w, grid, mode, eng, [&](std::size_t k, const Vec& x) {
      for (std::size_t c = 0; c < at.size(); ++c)
        if (at[c] == k)
          std::copy(x.begin(), x.end(), r.snapshots[c].values.begin() + static_cast<std::ptrdiff_t>(path * w.dim()));
    });
  });
  return r;
}

}  // namespace disco::flow
