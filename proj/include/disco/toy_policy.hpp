#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "disco/curriculum.hpp"
#include "disco/embedding.hpp"
#include "disco/error.hpp"
#include "disco/grpo.hpp"
#include "disco/records.hpp"
#include "disco/rewards.hpp"
#include "disco/rng.hpp"

namespace disco::toy {

/// What the toy generator emitted for one image: the face count it drew and the
/// raw (pre-normalization) vector of every used slot.
struct ToyAction {
  int chosen_count = 0;
  std::vector<std::vector<double>> raw_vectors;
  double log_prob = 0;
};

/// Gradient with the same layout as ToyPolicy's parameters.
struct ToyGradient {
  std::vector<double> face_means;  // slots x dim, row-major
  double log_sigma = 0;
  std::vector<double> count_logits;

  std::vector<double> flatten() const {
    std::vector<double> out(face_means);
    out.push_back(log_sigma);
    out.insert(out.end(), count_logits.begin(), count_logits.end());
    return out;
  }
};

struct PolicyShape {
  std::size_t dim = 8;
  std::size_t slots = 7;
  int count_min = 2;
  int count_max = 7;

  std::size_t counts() const noexcept { return static_cast<std::size_t>(count_max - count_min + 1); }
};

/// Stochastic identity generator. An image is drawn as
///   m ~ Categorical(softmax(count_logits)) over [count_min, count_max],
///   g_j ~ N(face_means[j], sigma^2 I) for slots j < m,
/// and its faces are normalize(g_j).
class ToyPolicy {
public:
  using Action = ToyAction;

  ToyPolicy() = default;
  ToyPolicy(PolicyShape shape, std::vector<double> face_means, double log_sigma, std::vector<double> count_logits)
      : shape_(shape), face_means_(std::move(face_means)), log_sigma_(log_sigma), count_logits_(std::move(count_logits)) {
    if (shape_.dim < 1) throw InvalidArgument("toy policy dimension must be >= 1");
    if (shape_.count_min < 0 || shape_.count_max < shape_.count_min)
      throw InvalidArgument("toy policy needs 0 <= count_min <= count_max");
    if (shape_.slots < static_cast<std::size_t>(shape_.count_max))
      throw InvalidArgument("toy policy needs at least count_max slots");
    if (face_means_.size() != shape_.slots * shape_.dim) throw LengthMismatch(face_means_.size(), shape_.slots * shape_.dim);
    if (count_logits_.size() != shape_.counts()) throw LengthMismatch(count_logits_.size(), shape_.counts());
  }

  /// Every slot mean equals the same unit direction; uniform count logits.
  static ToyPolicy collapsed(PolicyShape shape, double sigma, std::uint64_t seed) {
    Engine eng = substream(seed, 0x636f6c6cULL);
    std::normal_distribution<double> normal;
    std::vector<double> dir(shape.dim);
    for (double& x : dir) x = normal(eng);
    const auto unit = normalize(dir);
    std::vector<double> means;
    means.reserve(shape.slots * shape.dim);
    for (std::size_t j = 0; j < shape.slots; ++j) means.insert(means.end(), unit.values().begin(), unit.values().end());
    return ToyPolicy(shape, std::move(means), std::log(sigma), std::vector<double>(shape.counts(), 0.0));
  }

  const PolicyShape& shape() const noexcept { return shape_; }
  std::span<const double> face_means() const noexcept { return face_means_; }
  std::span<const double> slot_mean(std::size_t j) const { return {face_means_.data() + j * shape_.dim, shape_.dim}; }
  double log_sigma() const noexcept { return log_sigma_; }
  double sigma() const noexcept { return std::exp(log_sigma_); }
  std::span<const double> count_logits() const noexcept { return count_logits_; }

  std::vector<double> count_probabilities() const {
    const double mx = *std::max_element(count_logits_.begin(), count_logits_.end());
    std::vector<double> p(count_logits_.size());
    double z = 0;
    for (std::size_t c = 0; c < p.size(); ++c) z += (p[c] = std::exp(count_logits_[c] - mx));
    for (double& x : p) x /= z;
    return p;
  }

  std::vector<double> parameters() const {
    std::vector<double> out(face_means_);
    out.push_back(log_sigma_);
    out.insert(out.end(), count_logits_.begin(), count_logits_.end());
    return out;
  }

  ToyPolicy with_parameters(std::span<const double> theta) const {
    const std::size_t nm = face_means_.size();
    if (theta.size() != nm + 1 + count_logits_.size()) throw LengthMismatch(theta.size(), nm + 1 + count_logits_.size());
    return ToyPolicy(shape_, std::vector<double>(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(nm)), theta[nm],
                     std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(nm + 1), theta.end()));
  }

  double log_prob(const ToyAction& a) const {
    check_action(a);
    const double log_pm = log_softmax(a.chosen_count);
    const double s2 = sigma() * sigma();
    const double d = static_cast<double>(shape_.dim);
    double lp = log_pm;
    for (std::size_t j = 0; j < a.raw_vectors.size(); ++j) {
      const auto mu = slot_mean(j);
      double q = 0;
      for (std::size_t i = 0; i < shape_.dim; ++i) q += (a.raw_vectors[j][i] - mu[i]) * (a.raw_vectors[j][i] - mu[i]);
      lp += -0.5 * d * std::log(2.0 * std::numbers::pi) - d * log_sigma_ - 0.5 * q / s2;
    }
    return lp;
  }

  /// Analytic gradient of log_prob(a) with respect to every parameter.
  ToyGradient log_prob_grad(const ToyAction& a) const {
    check_action(a);
    ToyGradient g;
    g.face_means.assign(face_means_.size(), 0.0);
    g.count_logits = count_probabilities();
    for (double& x : g.count_logits) x = -x;
    g.count_logits[index_of(a.chosen_count)] += 1.0;
    const double s2 = sigma() * sigma();
    const double d = static_cast<double>(shape_.dim);
    for (std::size_t j = 0; j < a.raw_vectors.size(); ++j) {
      const auto mu = slot_mean(j);
      double q = 0;
      for (std::size_t i = 0; i < shape_.dim; ++i) {
        const double r = a.raw_vectors[j][i] - mu[i];
        g.face_means[j * shape_.dim + i] = r / s2;
        q += r * r;
      }
      g.log_sigma += q / s2 - d;
    }
    return g;
  }

  std::vector<double> log_prob_gradient(const ToyAction& a) const { return log_prob_grad(a).flatten(); }

  /// KL(this || ref) of the full image distribution: the count KL plus, for each
  /// slot, the probability the slot is used times its Gaussian KL.
  double kl(const ToyPolicy& ref) const {
    check_same_shape(ref);
    const auto p = count_probabilities();
    const auto q = ref.count_probabilities();
    double k = 0;
    for (std::size_t c = 0; c < p.size(); ++c)
      if (p[c] > 0) k += p[c] * (std::log(p[c]) - std::log(q[c]));
    const auto used = slot_usage(p);
    for (std::size_t j = 0; j < shape_.slots; ++j) k += used[j] * slot_kl(ref, j);
    return k;
  }

  std::vector<double> kl_gradient(const ToyPolicy& ref) const {
    check_same_shape(ref);
    const auto p = count_probabilities();
    const auto q = ref.count_probabilities();
    const auto used = slot_usage(p);
    const double d = static_cast<double>(shape_.dim);
    const double s2 = sigma() * sigma();
    const double r2 = ref.sigma() * ref.sigma();

    ToyGradient g;
    g.face_means.assign(face_means_.size(), 0.0);
    for (std::size_t j = 0; j < shape_.slots; ++j) {
      const auto mu = slot_mean(j);
      const auto mr = ref.slot_mean(j);
      for (std::size_t i = 0; i < shape_.dim; ++i) g.face_means[j * shape_.dim + i] = used[j] * (mu[i] - mr[i]) / r2;
      g.log_sigma += used[j] * d * (s2 / r2 - 1.0);
    }

    // Through p: d/dz_k of sum_c p_c L_c with L_c = log p_c - log q_c + sum_{j<count_c} KL_j.
    std::vector<double> per_count(p.size(), 0.0);
    std::vector<double> slot_kls(shape_.slots);
    for (std::size_t j = 0; j < shape_.slots; ++j) slot_kls[j] = slot_kl(ref, j);
    double mean_l = 0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      double l = std::log(p[c]) - std::log(q[c]);
      const int count = shape_.count_min + static_cast<int>(c);
      for (int j = 0; j < count; ++j) l += slot_kls[static_cast<std::size_t>(j)];
      per_count[c] = l;
      mean_l += p[c] * l;
    }
    g.count_logits.resize(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) g.count_logits[c] = p[c] * (per_count[c] - mean_l);
    return g.flatten();
  }

  /// Draws one image for a prompt requesting `target_count` people.
  std::pair<ToyAction, ImageRecord> rollout(int target_count, Engine& engine) const {
    const auto p = count_probabilities();
    std::discrete_distribution<int> pick_count(p.begin(), p.end());
    std::normal_distribution<double> normal;
    ToyAction a;
    a.chosen_count = shape_.count_min + pick_count(engine);
    ImageRecord img;
    img.target_count = target_count;
    const double s = sigma();
    for (int j = 0; j < a.chosen_count; ++j) {
      const auto mu = slot_mean(static_cast<std::size_t>(j));
      std::vector<double> g(shape_.dim);
      for (std::size_t i = 0; i < shape_.dim; ++i) g[i] = mu[i] + s * normal(engine);
      img.faces.push_back(FaceRecord{normalize(g), 1.0, std::nullopt});
      a.raw_vectors.push_back(std::move(g));
    }
    a.log_prob = log_prob(a);
    return {std::move(a), std::move(img)};
  }

private:
  std::size_t index_of(int count) const {
    if (count < shape_.count_min || count > shape_.count_max)
      throw InvalidArgument("count " + std::to_string(count) + " outside the policy's support");
    return static_cast<std::size_t>(count - shape_.count_min);
  }

  double log_softmax(int count) const {
    const double mx = *std::max_element(count_logits_.begin(), count_logits_.end());
    double z = 0;
    for (double l : count_logits_) z += std::exp(l - mx);
    return count_logits_[index_of(count)] - mx - std::log(z);
  }

  void check_action(const ToyAction& a) const {
    index_of(a.chosen_count);
    if (a.raw_vectors.size() != static_cast<std::size_t>(a.chosen_count))
      throw LengthMismatch(a.raw_vectors.size(), static_cast<std::size_t>(a.chosen_count));
    for (const auto& v : a.raw_vectors)
      if (v.size() != shape_.dim) throw DimensionMismatch(v.size(), shape_.dim);
  }

  void check_same_shape(const ToyPolicy& ref) const {
    if (ref.face_means_.size() != face_means_.size() || ref.count_logits_.size() != count_logits_.size())
      throw InvalidArgument("reference policy has a different shape");
  }

  // P(count > j) for each slot j.
  std::vector<double> slot_usage(const std::vector<double>& p) const {
    std::vector<double> used(shape_.slots, 0.0);
    for (std::size_t c = 0; c < p.size(); ++c) {
      const int count = shape_.count_min + static_cast<int>(c);
      for (int j = 0; j < count; ++j) used[static_cast<std::size_t>(j)] += p[c];
    }
    return used;
  }

  double slot_kl(const ToyPolicy& ref, std::size_t j) const {
    const double d = static_cast<double>(shape_.dim);
    const double s2 = sigma() * sigma();
    const double r2 = ref.sigma() * ref.sigma();
    const auto mu = slot_mean(j);
    const auto mr = ref.slot_mean(j);
    double q = 0;
    for (std::size_t i = 0; i < shape_.dim; ++i) q += (mu[i] - mr[i]) * (mu[i] - mr[i]);
    return d * (ref.log_sigma_ - log_sigma_ + 0.5 * s2 / r2 - 0.5) + 0.5 * q / r2;
  }

  PolicyShape shape_;
  std::vector<double> face_means_;
  double log_sigma_ = 0;
  std::vector<double> count_logits_;
};

static_assert(GrpoPolicy<ToyPolicy>);

/// Samples one image; thin wrapper so call sites read like the algorithm.
inline std::pair<ToyAction, ImageRecord> rollout(const ToyPolicy& policy, int target_count, Engine& engine) {
  return policy.rollout(target_count, engine);
}

struct TrainLogRow {
  std::int64_t step = 0;
  int n_target = 0;
  double intra = 0;
  double group = 0;
  double count = 0;
  double quality = 0;
  double total = 0;
  double objective = 0;
  double kl = 0;
};

struct ToyTrainOptions {
  double quality_stub = 7.0;  // raw quality score attached to every image
};

struct TrainResult {
  ToyPolicy policy;
  std::vector<TrainLogRow> log;
};

/// Rollouts of one group for prompt `target_count`, reproducible from (seed, stream).
inline std::vector<Trajectory<ToyAction>> sample_group(const ToyPolicy& policy, int target_count, std::size_t group_size,
                                                       std::uint64_t seed, std::uint64_t stream, std::size_t workers,
                                                       const std::string& prompt_id, std::optional<double> quality) {
  std::vector<Trajectory<ToyAction>> out(group_size);
  parallel_for(group_size, workers, [&](std::size_t i) {
    Engine eng = substream(seed, stream * group_size + i);
    auto [action, image] = policy.rollout(target_count, eng);
    image.prompt_id = prompt_id;
    image.image_id = prompt_id + "/" + std::to_string(i);
    image.quality_raw = quality;
    out[i].log_prob = action.log_prob;
    out[i].action = std::move(action);
    out[i].final_image = std::move(image);
  });
  return out;
}

/// The full training loop: curriculum count, group rollouts, compositional
/// reward, group-normalized advantages, one GRPO ascent step per iteration.
/// The initial policy is the frozen KL reference.
inline TrainResult train_disco(const ToyPolicy& init, const TrainConfig& cfg, const CurriculumConfig& cur,
                               const RewardWeights& w, std::int64_t steps, const ToyTrainOptions& opts = {}) {
  cfg.validate();
  cur.validate();
  w.validate();
  const ToyPolicy reference = init;
  TrainResult res{init, {}};
  CurriculumState state(cfg.seed);
  const std::uint64_t rollout_seed = cfg.seed ^ 0x5deece66dULL;

  for (std::int64_t t = 0; t < steps; ++t) {
    std::vector<ScoredGroup<ToyAction>> batch;
    TrainLogRow row;
    row.step = state.step();
    double n_images = 0;
    for (std::size_t g = 0; g < cfg.groups_per_step; ++g) {
      const int n = sample_count(state, cur);
      if (g == 0) row.n_target = n;
      const std::uint64_t stream = static_cast<std::uint64_t>(t) * cfg.groups_per_step + g;
      const std::string prompt = "step" + std::to_string(t) + "/g" + std::to_string(g) + "/n" + std::to_string(n);
      ScoredGroup<ToyAction> sg;
      sg.trajectories = sample_group(res.policy, n, cfg.group_size, rollout_seed, stream, cfg.workers, prompt,
                                     opts.quality_stub);
      GroupRecord group{prompt, {}};
      for (const auto& tr : sg.trajectories) group.images.push_back(tr.final_image);
      const auto breakdown = composite_reward(group, w);
      std::vector<double> rewards;
      for (const auto& b : breakdown) {
        rewards.push_back(b.total);
        row.intra += b.intra;
        row.group += b.group;
        row.count += b.count;
        row.quality += b.quality;
        row.total += b.total;
        n_images += 1;
      }
      sg.advantages = advantages(rewards, cfg.epsilon_adv);
      batch.push_back(std::move(sg));
    }
    row.intra /= n_images;
    row.group /= n_images;
    row.count /= n_images;
    row.quality /= n_images;
    row.total /= n_images;
    row.kl = res.policy.kl(reference);
    row.objective = objective<ToyAction>(batch, row.kl, cfg);
    try {
      res.policy = policy_gradient_step(res.policy, reference, std::span<const ScoredGroup<ToyAction>>(batch), cfg);
    } catch (const NonFiniteGradient& e) {
      throw NonFiniteGradient(e.component(), "training step " + std::to_string(t));
    }
    res.log.push_back(row);
    state.advance();
  }
  return res;
}

/// Mean similarity over face pairs that come from different images.
inline double cross_image_similarity(std::span<const ImageRecord> images) {
  CompensatedSum s;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < images.size(); ++a)
    for (std::size_t b = a + 1; b < images.size(); ++b)
      for (const auto& fa : images[a].faces)
        for (const auto& fb : images[b].faces) {
          s.add(cosine_sim(fa.embedding, fb.embedding));
          ++pairs;
        }
  return pairs == 0 ? 0.0 : s.value() / static_cast<double>(pairs);
}

}  // namespace disco::toy
