#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "disco/config.hpp"
#include "disco/error.hpp"
#include "disco/flow_sim.hpp"
#include "disco/io.hpp"
#include "disco/metrics.hpp"
#include "disco/rewards.hpp"
#include "disco/toy_policy.hpp"

namespace disco::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kValidation = 1, kInternal = 2 };

/// Sample mean/variance of a snapshot against the analytic marginal, in units
/// of their standard errors. Coordinates are pooled (the world is isotropic).
struct MomentCheck {
  double t = 0;
  double mean = 0, var = 0;
  double expected_mean = 0, expected_var = 0;
  double mean_z = 0, var_z = 0;
  bool pass = false;
};

inline MomentCheck check_moments(const flow::Snapshot& snap, const flow::GaussianWorld& w, double z_limit) {
  MomentCheck c;
  c.t = snap.t;
  const auto m = flow::marginal(snap.t, w);
  const double n = static_cast<double>(snap.values.size());
  double centered_mean = 0;
  for (std::size_t i = 0; i < snap.values.size(); ++i) centered_mean += snap.values[i] - m.mean_t[i % snap.dim];
  centered_mean /= n;
  double ss = 0;
  for (std::size_t i = 0; i < snap.values.size(); ++i) {
    const double r = snap.values[i] - m.mean_t[i % snap.dim] - centered_mean;
    ss += r * r;
  }
  c.var = ss / (n - 1.0);
  c.expected_mean = m.mean_t.empty() ? 0.0 : m.mean_t[0];
  c.mean = c.expected_mean + centered_mean;
  c.expected_var = m.var_t;
  c.mean_z = centered_mean / std::sqrt(m.var_t / n);
  c.var_z = (c.var - m.var_t) / (m.var_t * std::sqrt(2.0 / (n - 1.0)));
  c.pass = std::abs(c.mean_z) <= z_limit && std::abs(c.var_z) <= z_limit;
  return c;
}

inline json sde_check_report(const config::SdeSettings& s, std::uint64_t seed, std::size_t workers, bool& all_pass) {
  const auto world = flow::GaussianWorld::isotropic(s.dim, s.mu0, s.s0);
  json checks = json::array();
  all_pass = true;
  std::uint64_t run = 0;
  for (const auto& name : s.sigmas) {
    const auto schedule = flow::SigmaSchedule::parse(name);
    const auto grid = flow::SamplerGrid::uniform(s.steps, schedule);
    const auto sim = flow::simulate(world, grid, s.paths, flow::Mode::sde, seed + run++, s.checkpoints, workers);
    for (const auto& snap : sim.snapshots) {
      if (snap.t == 0.0 && std::find(s.checkpoints.begin(), s.checkpoints.end(), 0.0) == s.checkpoints.end()) continue;
      const auto c = check_moments(snap, world, s.z_limit);
      all_pass = all_pass && c.pass;
      checks.push_back(json{{"mode", "sde"},
                            {"sigma", schedule.name()},
                            {"t", c.t},
                            {"mean", c.mean},
                            {"expected_mean", c.expected_mean},
                            {"var", c.var},
                            {"expected_var", c.expected_var},
                            {"mean_z", c.mean_z},
                            {"var_z", c.var_z},
                            {"pass", c.pass}});
    }
  }
  return json{{"pass", all_pass},
              {"world", {{"mu0", s.mu0}, {"s0", s.s0}, {"dim", s.dim}}},
              {"steps", s.steps},
              {"paths", s.paths},
              {"z_limit", s.z_limit},
              {"seed", seed},
              {"checks", std::move(checks)}};
}

namespace detail {

/// "-" or empty writes to `fallback`.
class Sink {
public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      out_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw InvalidArgument("cannot open output '" + path + "'");
      out_ = file_.get();
    }
  }
  std::ostream& stream() { return *out_; }

private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_ = nullptr;
};

inline std::string replace_extension(const std::string& path, const std::string& ext) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + ext;
  return path.substr(0, dot) + ext;
}

}  // namespace detail

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Identity-diversity rewards, metrics and desk-scale GRPO training"};
  app.require_subcommand(1);

  std::string input, output, config_path, preset, agg, csv_path, snapshot_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::int64_t> steps, stride;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--output", output, "output path ('-' for stdout)");
    sub->add_option("--seed", seed, "random seed");
  };

  auto* reward = app.add_subcommand("reward", "score groups: dataset JSONL in, reward breakdown JSONL out");
  add_common(reward);
  reward->add_option("--input", input, "disco/1 dataset")->required()->check(CLI::ExistingFile);
  reward->add_option("--preset", preset, "reward weight preset (appendix-d | table-a2)");
  reward->add_option("--agg", agg, "intra-image aggregation (max | mean | min)");

  auto* evaluate = app.add_subcommand("evaluate", "dataset metrics: Count Accuracy, UFA, GIS (JSON + CSV)");
  add_common(evaluate);
  evaluate->add_option("--input", input, "disco/1 dataset")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--threshold", threshold, "duplicate similarity threshold kappa_dup");
  evaluate->add_option("--csv", csv_path, "CSV report path (default: JSON path with .csv)");

  auto* curriculum = app.add_subcommand("curriculum", "emit the p_t(n) table as CSV");
  add_common(curriculum);
  curriculum->add_option("--stride", stride, "step spacing of the table");

  auto* train = app.add_subcommand("train-toy", "GRPO training of the toy identity generator");
  add_common(train);
  train->add_option("--preset", preset, "reward weight preset (appendix-d | table-a2)");
  train->add_option("--agg", agg, "intra-image aggregation (max | mean | min)");
  train->add_option("--steps", steps, "training steps");
  train->add_option("--snapshot", snapshot_path, "final policy snapshot (default: <output>.policy.json)");

  auto* sde = app.add_subcommand("sde-check", "check SDE marginals against the analytic Gaussian path");
  add_common(sde);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    config::RunConfig cfg = config::defaults();
    if (!config_path.empty()) {
      cfg = config::load(config_path, cfg, preset);
    } else if (!preset.empty()) {
      cfg.weights = config::preset_weights(preset);
      cfg.preset = preset;
    }
    if (!agg.empty()) cfg.weights.intra_aggregation = parse_aggregation(agg);
    if (threshold) cfg.metrics.dup_threshold = *threshold;
    if (seed) cfg.seed = *seed;
    if (output.empty()) output = cfg.output.path;
    cfg.weights.validate();
    cfg.metrics.validate();

    if (*reward) {
      const auto ds = io::read_dataset(input);
      detail::Sink sink(output, out);
      for (const auto& g : ds.groups)
        for (const auto& b : composite_reward(g, cfg.weights)) sink.stream() << io::breakdown_json(b, g.prompt_id).dump() << '\n';
      return kOk;
    }
    if (*evaluate) {
      const auto ds = io::read_dataset(input);
      const auto images = ds.images();
      const auto report = disco::evaluate(images, cfg.metrics);
      {
        detail::Sink sink(output, out);
        sink.stream() << io::report_json(report, cfg.metrics).dump(2) << '\n';
      }
      if (csv_path.empty() && !output.empty() && output != "-") csv_path = detail::replace_extension(output, ".csv");
      if (!csv_path.empty()) {
        detail::Sink sink(csv_path, out);
        io::write_report_csv(sink.stream(), report);
      }
      return kOk;
    }
    if (*curriculum) {
      cfg.curriculum.validate();
      std::int64_t s = stride.value_or(cfg.curriculum_stride);
      if (s <= 0) s = std::max<std::int64_t>(1, cfg.curriculum.t_curriculum / 20);
      detail::Sink sink(output, out);
      io::write_curriculum_csv(sink.stream(), cfg.curriculum, 2 * cfg.curriculum.t_curriculum, s);
      return kOk;
    }
    if (*train) {
      cfg.train.seed = cfg.seed;
      const std::int64_t n_steps = steps.value_or(cfg.toy.steps);
      toy::PolicyShape shape{cfg.toy.dim, static_cast<std::size_t>(cfg.toy.count_max), cfg.toy.count_min,
                             cfg.toy.count_max};
      const auto init = toy::ToyPolicy::collapsed(shape, cfg.toy.init_sigma, cfg.seed);
      const auto result = toy::train_disco(init, cfg.train, cfg.curriculum, cfg.weights, n_steps,
                                           toy::ToyTrainOptions{cfg.toy.quality_stub});
      {
        detail::Sink sink(output, out);
        io::write_train_csv(sink.stream(), result.log);
      }
      if (snapshot_path.empty()) snapshot_path = cfg.output.snapshot;
      if (snapshot_path.empty() && !output.empty() && output != "-") snapshot_path = output + ".policy.json";
      if (!snapshot_path.empty()) {
        detail::Sink sink(snapshot_path, out);
        sink.stream() << io::policy_json(result.policy).dump() << '\n';
      }
      return kOk;
    }
    if (*sde) {
      bool pass = false;
      const auto report = sde_check_report(cfg.sde, cfg.seed, cfg.train.workers, pass);
      detail::Sink sink(output, out);
      sink.stream() << report.dump(2) << '\n';
      return pass ? kOk : kValidation;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace disco::cli
