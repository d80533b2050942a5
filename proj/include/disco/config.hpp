#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "disco/curriculum.hpp"
#include "disco/error.hpp"
#include "disco/flow_sim.hpp"
#include "disco/grpo.hpp"
#include "disco/metrics.hpp"
#include "disco/rewards.hpp"
#include "disco/toy_policy.hpp"

// Flat "section.key = value" configuration. Lines starting with '#' are comments.

namespace disco::config {

struct ToySettings {
  std::size_t dim = 8;
  int count_min = 2;
  int count_max = 4;
  double init_sigma = 0.1;
  double quality_stub = 7.0;
  std::int64_t steps = 500;
};

struct SdeSettings {
  double mu0 = 2.0;
  double s0 = 0.5;
  std::size_t dim = 1;
  std::size_t steps = 200;
  std::size_t paths = 50000;
  std::vector<std::string> sigmas{"constant:0.2", "constant:0.5"};
  std::vector<double> checkpoints{0.75, 0.5, 0.25};
  double z_limit = 3.0;
};

struct OutputSettings {
  std::string path;
  std::string snapshot;
};

struct RunConfig {
  std::string preset = "appendix-d";
  RewardWeights weights = RewardWeights::appendix_d();
  MetricsConfig metrics;
  CurriculumConfig curriculum;
  std::int64_t curriculum_stride = 0;  // 0: t_curriculum / 20
  TrainConfig train;
  ToySettings toy;
  SdeSettings sde;
  OutputSettings output;
  std::uint64_t seed = 0;
};

inline RewardWeights preset_weights(const std::string& name) {
  if (name == "appendix-d") return RewardWeights::appendix_d();
  if (name == "table-a2") return RewardWeights::table_a2();
  throw ConfigError("unknown preset '" + name + "' (expected appendix-d or table-a2)");
}

/// Desk-scale defaults for the toy trainer.
inline RunConfig defaults() {
  RunConfig c;
  c.train.group_size = 8;
  c.train.groups_per_step = 2;
  c.train.learning_rate = 0.02;
  c.curriculum.n_max = 4;
  c.curriculum.t_curriculum = 200;
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return x;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  const auto x = to_int(key, v);
  if (x < 0) throw ConfigError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(x);
}

inline std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define DISCO_NUM(KEY, FIELD) t[KEY] = [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }
#define DISCO_INT(KEY, FIELD) t[KEY] = [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_int(k, v); }
#define DISCO_SIZE(KEY, FIELD) t[KEY] = [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_size(k, v); }
    DISCO_NUM("reward.alpha", weights.alpha);
    DISCO_NUM("reward.beta", weights.beta);
    DISCO_NUM("reward.gamma", weights.gamma);
    DISCO_NUM("reward.zeta", weights.zeta);
    DISCO_NUM("reward.lambda", weights.lambda_sigmoid);
    DISCO_NUM("reward.q_min", weights.q_min);
    DISCO_NUM("reward.q_max", weights.q_max);
    DISCO_NUM("reward.single_face_intra", weights.single_face_intra);
    t["reward.aggregation"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.weights.intra_aggregation = parse_aggregation(v);
    };
    DISCO_NUM("metrics.dup_threshold", metrics.dup_threshold);
    DISCO_NUM("metrics.det_threshold", metrics.det_threshold);
    t["curriculum.n_min"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.curriculum.n_min = static_cast<int>(to_int(k, v));
    };
    t["curriculum.n_max"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.curriculum.n_max = static_cast<int>(to_int(k, v));
    };
    t["curriculum.simple_set"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.curriculum.simple_set.clear();
      for (const auto& item : split(v, ',')) c.curriculum.simple_set.insert(static_cast<int>(to_int(k, item)));
    };
    DISCO_INT("curriculum.t_curriculum", curriculum.t_curriculum);
    DISCO_NUM("curriculum.gamma_c", curriculum.gamma_c);
    DISCO_INT("curriculum.stride", curriculum_stride);
    DISCO_SIZE("train.group_size", train.group_size);
    DISCO_NUM("train.beta_kl", train.beta_kl);
    DISCO_NUM("train.learning_rate", train.learning_rate);
    DISCO_NUM("train.epsilon_adv", train.epsilon_adv);
    DISCO_INT("train.max_steps", train.max_steps);
    DISCO_SIZE("train.groups_per_step", train.groups_per_step);
    DISCO_SIZE("train.workers", train.workers);
    DISCO_SIZE("toy.dim", toy.dim);
    t["toy.count_min"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.toy.count_min = static_cast<int>(to_int(k, v));
    };
    t["toy.count_max"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.toy.count_max = static_cast<int>(to_int(k, v));
    };
    DISCO_NUM("toy.init_sigma", toy.init_sigma);
    DISCO_NUM("toy.quality_stub", toy.quality_stub);
    DISCO_INT("toy.steps", toy.steps);
    DISCO_NUM("sde.mu0", sde.mu0);
    DISCO_NUM("sde.s0", sde.s0);
    DISCO_SIZE("sde.dim", sde.dim);
    DISCO_SIZE("sde.steps", sde.steps);
    DISCO_SIZE("sde.paths", sde.paths);
    DISCO_NUM("sde.z_limit", sde.z_limit);
    t["sde.sigmas"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.sde.sigmas = split(v, ';');
      for (const auto& s : c.sde.sigmas) flow::SigmaSchedule::parse(s);
    };
    t["sde.checkpoints"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.sde.checkpoints.clear();
      for (const auto& item : split(v, ',')) c.sde.checkpoints.push_back(to_double(k, item));
    };
    t["output.path"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output.path = v; };
    t["output.snapshot"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output.snapshot = v; };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.seed = static_cast<std::uint64_t>(to_int(k, v));
    };
#undef DISCO_NUM
#undef DISCO_INT
#undef DISCO_SIZE
    return t;
  }();
  return table;
}

}  // namespace detail

/// Parses key/value text on top of `base`. The preset (reward.preset) is applied
/// before any explicit reward.* value regardless of line order; a non-empty
/// `preset_override` replaces the file's preset.
inline RunConfig parse(std::istream& in, RunConfig base = defaults(), const std::string& preset_override = {}) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string text;
  std::size_t line = 0;
  std::set<std::string> seen;
  while (std::getline(in, text)) {
    ++line;
    const auto stripped = detail::trim(text);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    auto key = detail::trim(stripped.substr(0, eq));
    auto value = detail::trim(stripped.substr(eq + 1));
    if (key != "reward.preset" && !detail::setters().contains(key))
      throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("config line " + std::to_string(line) + ": duplicate key '" + key + "'");
    entries.emplace_back(std::move(key), std::move(value));
  }
  std::string preset = preset_override;
  for (const auto& [k, v] : entries)
    if (k == "reward.preset" && preset.empty()) preset = v;
  if (!preset.empty()) {
    base.weights = preset_weights(preset);
    base.preset = preset;
  }
  for (const auto& [k, v] : entries)
    if (k != "reward.preset") detail::setters().at(k)(base, k, v);
  return base;
}

inline RunConfig load(const std::string& path, RunConfig base = defaults(), const std::string& preset_override = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse(in, std::move(base), preset_override);
}

}  // namespace disco::config
