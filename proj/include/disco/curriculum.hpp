#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "disco/error.hpp"
#include "disco/rng.hpp"

namespace disco {

/// Person-count curriculum: annealed blend of a "simple" support and the
/// uniform distribution over [n_min, n_max].
struct CurriculumConfig {
  int n_min = 2;
  int n_max = 7;
  std::set<int> simple_set{2, 3, 4};
  std::int64_t t_curriculum = 1000;
  double gamma_c = 3.0;

  void validate() const {
    if (n_min < 1 || n_max < n_min) throw InvalidArgument("curriculum requires 1 <= n_min <= n_max");
    if (simple_set.empty()) throw InvalidArgument("curriculum simple_set is empty");
    for (int n : simple_set)
      if (n < n_min || n > n_max) throw InvalidArgument("simple_set must lie inside [n_min, n_max]");
    if (t_curriculum < 1) throw InvalidArgument("t_curriculum must be >= 1");
    if (!(gamma_c > 1.0)) throw InvalidArgument("gamma_c must exceed 1");
  }

  std::size_t support_size() const noexcept { return static_cast<std::size_t>(n_max - n_min + 1); }
};

/// Training updates corresponding to a number of epochs.
inline std::int64_t epochs_to_steps(double epochs, std::int64_t updates_per_epoch) {
  if (epochs < 0 || updates_per_epoch < 1) throw InvalidArgument("epochs_to_steps needs epochs >= 0 and updates >= 1");
  return static_cast<std::int64_t>(std::llround(epochs * static_cast<double>(updates_per_epoch)));
}

/// (t / t_curriculum)^gamma_c, held at 1 past the curriculum horizon.
inline double annealing_weight(std::int64_t t, const CurriculumConfig& cfg) {
  if (t < 0) throw InvalidArgument("step must be non-negative");
  if (t >= cfg.t_curriculum) return 1.0;
  return std::pow(static_cast<double>(t) / static_cast<double>(cfg.t_curriculum), cfg.gamma_c);
}

/// p_t(n) for n in [n_min, n_max].
struct CountDistribution {
  int n_min = 2;
  std::vector<double> p;

  int n_max() const noexcept { return n_min + static_cast<int>(p.size()) - 1; }
  double operator()(int n) const noexcept {
    if (n < n_min || n > n_max()) return 0.0;
    return p[static_cast<std::size_t>(n - n_min)];
  }
};

inline CountDistribution distribution(std::int64_t t, const CurriculumConfig& cfg) {
  cfg.validate();
  if (t < 0) throw InvalidArgument("step must be non-negative");
  CountDistribution d;
  d.n_min = cfg.n_min;
  const double uniform = 1.0 / static_cast<double>(cfg.support_size());
  const double simple = 1.0 / static_cast<double>(cfg.simple_set.size());
  d.p.assign(cfg.support_size(), uniform);
  if (t > cfg.t_curriculum) return d;
  const double lambda = annealing_weight(t, cfg);
  for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
    const double ps = cfg.simple_set.contains(n) ? simple : 0.0;
    d.p[static_cast<std::size_t>(n - cfg.n_min)] = lambda * uniform + (1.0 - lambda) * ps;
  }
  return d;
}

/// Step counter plus the sampler's private random stream.
class CurriculumState {
public:
  explicit CurriculumState(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed), engine_(substream(rng_seed, 0)) {}

  std::int64_t step() const noexcept { return step_; }
  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  void advance() noexcept { ++step_; }
  void set_step(std::int64_t t) {
    if (t < 0) throw InvalidArgument("step must be non-negative");
    step_ = t;
  }
  Engine& engine() noexcept { return engine_; }

private:
  std::int64_t step_ = 0;
  std::uint64_t rng_seed_;
  Engine engine_;
};

/// Draws a person count from p_{state.step}; consumes the state's stream.
inline int sample_count(CurriculumState& state, const CurriculumConfig& cfg) {
  const auto d = distribution(state.step(), cfg);
  std::discrete_distribution<int> pick(d.p.begin(), d.p.end());
  return d.n_min + pick(state.engine());
}

}  // namespace disco
