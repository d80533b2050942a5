#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "disco/error.hpp"
#include "disco/records.hpp"

namespace disco {

struct TrainConfig {
  std::size_t group_size = 21;  // M
  double beta_kl = 0.01;
  double learning_rate = 1e-4;
  double epsilon_adv = 1e-6;
  std::int64_t max_steps = 500;
  std::uint64_t seed = 0;
  std::size_t groups_per_step = 3;  // prompts per update
  std::size_t workers = 1;          // rollout threads; results do not depend on it

  void validate() const {
    if (group_size < 1) throw InvalidArgument("group_size must be >= 1");
    if (beta_kl < 0) throw InvalidArgument("beta_kl must be >= 0");
    if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be > 0");
    if (!(epsilon_adv > 0)) throw InvalidArgument("epsilon_adv must be > 0");
    if (groups_per_step < 1) throw InvalidArgument("groups_per_step must be >= 1");
  }
};

/// Group-standardized rewards with population statistics.
struct AdvantageSet {
  std::vector<double> rewards;
  double mean = 0;
  double std = 0;
  std::vector<double> advantages;
  double epsilon = 1e-6;
};

inline AdvantageSet advantages(std::span<const double> rewards, double epsilon) {
  if (rewards.empty()) throw InvalidArgument("advantages need at least one reward");
  if (!(epsilon > 0)) throw InvalidArgument("advantage epsilon must be positive");
  AdvantageSet a;
  a.rewards.assign(rewards.begin(), rewards.end());
  a.epsilon = epsilon;
  const double m = static_cast<double>(rewards.size());
  double sum = 0;
  for (double r : rewards) sum += r;
  a.mean = sum / m;
  double ss = 0;
  for (double r : rewards) ss += (r - a.mean) * (r - a.mean);
  a.std = std::sqrt(ss / m);
  // A rounded mean can sit an ulp away from identical rewards; such groups carry no signal.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) {
    a.mean = rewards.front();
    a.std = 0;
    a.advantages.assign(rewards.size(), 0.0);
    return a;
  }
  a.advantages.reserve(rewards.size());
  for (double r : rewards) a.advantages.push_back((r - a.mean) / (a.std + epsilon));
  return a;
}

template <class Action>
struct Trajectory {
  Action action;
  double log_prob = 0;  // summed over emission steps
  ImageRecord final_image;
};

template <class Action>
struct ScoredGroup {
  std::vector<Trajectory<Action>> trajectories;
  AdvantageSet advantages;
};

/// A policy that exposes a flat parameter vector, exact log-probabilities of
/// its own actions, and an analytic KL to a frozen reference of the same family.
template <class P>
concept GrpoPolicy = requires(const P& p, const typename P::Action& a, std::span<const double> theta) {
  { p.parameters() } -> std::convertible_to<std::vector<double>>;
  { p.with_parameters(theta) } -> std::same_as<P>;
  { p.log_prob(a) } -> std::convertible_to<double>;
  { p.log_prob_gradient(a) } -> std::convertible_to<std::vector<double>>;
  { p.kl(p) } -> std::convertible_to<double>;
  { p.kl_gradient(p) } -> std::convertible_to<std::vector<double>>;
};

template <class Action>
void check_lengths(std::span<const ScoredGroup<Action>> groups) {
  for (const auto& g : groups)
    if (g.trajectories.size() != g.advantages.advantages.size())
      throw LengthMismatch(g.trajectories.size(), g.advantages.advantages.size());
}

/// mean over groups of (1/M) sum_i A_i log pi(tau_i), minus beta_kl * kl.
template <class Action>
double objective(std::span<const ScoredGroup<Action>> groups, double kl, const TrainConfig& cfg) {
  check_lengths(groups);
  double acc = 0;
  for (const auto& g : groups) {
    double s = 0;
    for (std::size_t i = 0; i < g.trajectories.size(); ++i)
      s += g.advantages.advantages[i] * g.trajectories[i].log_prob;
    if (!g.trajectories.empty()) acc += s / static_cast<double>(g.trajectories.size());
  }
  if (!groups.empty()) acc /= static_cast<double>(groups.size());
  return acc - cfg.beta_kl * kl;
}

/// The objective with log-probabilities and KL re-evaluated under `policy`
/// (actions and advantages held fixed).
template <GrpoPolicy P>
double evaluate_objective(const P& policy, const P& reference,
                          std::span<const ScoredGroup<typename P::Action>> groups, const TrainConfig& cfg) {
  check_lengths(groups);
  std::vector<ScoredGroup<typename P::Action>> rescored(groups.begin(), groups.end());
  for (auto& g : rescored)
    for (auto& tr : g.trajectories) tr.log_prob = policy.log_prob(tr.action);
  const double kl = cfg.beta_kl == 0.0 ? 0.0 : policy.kl(reference);
  return objective<typename P::Action>(rescored, kl, cfg);
}

/// Score-function gradient of the objective with respect to the flat parameters.
template <GrpoPolicy P>
std::vector<double> objective_gradient(const P& policy, const P& reference,
                                       std::span<const ScoredGroup<typename P::Action>> groups,
                                       const TrainConfig& cfg) {
  check_lengths(groups);
  std::vector<double> grad(policy.parameters().size(), 0.0);
  for (const auto& g : groups) {
    if (g.trajectories.empty()) continue;
    const double scale = 1.0 / (static_cast<double>(g.trajectories.size()) * static_cast<double>(groups.size()));
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      const double a = g.advantages.advantages[i];
      if (a == 0.0) continue;
      const auto glp = policy.log_prob_gradient(g.trajectories[i].action);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += scale * a * glp[k];
    }
  }
  if (cfg.beta_kl != 0.0) {
    const auto gkl = policy.kl_gradient(reference);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= cfg.beta_kl * gkl[k];
  }
  return grad;
}

/// One plain gradient-ascent step. Throws NonFiniteGradient (policy untouched)
/// if any gradient component is NaN or infinite.
template <GrpoPolicy P>
P policy_gradient_step(const P& policy, const P& reference,
                       std::span<const ScoredGroup<typename P::Action>> groups, const TrainConfig& cfg) {
  const auto grad = objective_gradient(policy, reference, groups, cfg);
  auto theta = policy.parameters();
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) throw NonFiniteGradient(k, "objective gradient");
    theta[k] += cfg.learning_rate * grad[k];
    if (!std::isfinite(theta[k])) throw NonFiniteGradient(k, "updated parameter");
  }
  return policy.with_parameters(theta);
}

}  // namespace disco
