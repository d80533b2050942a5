#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disco/embedding.hpp"
#include "disco/error.hpp"
#include "disco/records.hpp"

namespace disco {

enum class Aggregation { max, mean, min };

inline std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::max: return "max";
    case Aggregation::mean: return "mean";
    case Aggregation::min: return "min";
  }
  return "?";
}

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "max") return Aggregation::max;
  if (s == "mean") return Aggregation::mean;
  if (s == "min") return Aggregation::min;
  throw InvalidArgument("unknown aggregation '" + std::string(s) + "' (expected max|mean|min)");
}

/// Weights and shaping constants of the compositional reward.
struct RewardWeights {
  double alpha = 0.50;  // intra-image diversity
  double beta = 0.10;   // group-wise diversity
  double gamma = 0.15;  // count
  double zeta = 0.15;   // quality
  double lambda_sigmoid = 5.0;
  double q_min = 0.0;
  double q_max = 10.0;
  Aggregation intra_aggregation = Aggregation::max;
  double single_face_intra = 0.5;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || zeta < 0)
      throw InvalidArgument("reward weights must be non-negative");
    if (!(lambda_sigmoid > 0)) throw InvalidArgument("lambda_sigmoid must be positive");
    if (!(q_max > q_min)) throw InvalidArgument("q_max must exceed q_min");
  }

  /// Weights used for the final training run (0.50, 0.10, 0.15, 0.15).
  static RewardWeights appendix_d() { return RewardWeights{}; }

  /// Weights picked by the reward-weight grid search (0.5, 0.1, 0.3, 0.2).
  static RewardWeights table_a2() {
    RewardWeights w;
    w.alpha = 0.5;
    w.beta = 0.1;
    w.gamma = 0.3;
    w.zeta = 0.2;
    return w;
  }

  static RewardWeights only(double alpha, double beta, double gamma, double zeta) {
    RewardWeights w;
    w.alpha = alpha;
    w.beta = beta;
    w.gamma = gamma;
    w.zeta = zeta;
    return w;
  }
};

struct RewardBreakdown {
  std::string image_id;
  double intra = 0;
  double group = 0;
  double count = 0;
  double quality = 0;
  double total = 0;
  double delta_i = 0;
};

struct GroupDiversityStats {
  double s_g = 0;
  std::vector<double> s_g_minus;
  std::vector<double> deltas;
};

struct GroupDiversityResult {
  GroupDiversityStats stats;
  std::vector<double> rewards;
};

inline double logistic(double u) noexcept {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

/// 1 - agg(pairwise similarity), clamped to [0,1]; fixed fallback below two faces.
inline double intra_image_diversity(const ImageRecord& img, const RewardWeights& w) {
  const auto& faces = img.faces;
  const std::size_t m = faces.size();
  if (m < 2) return w.single_face_intra;
  double agg = 0.0;
  switch (w.intra_aggregation) {
    case Aggregation::max: agg = -std::numeric_limits<double>::infinity(); break;
    case Aggregation::min: agg = std::numeric_limits<double>::infinity(); break;
    case Aggregation::mean: agg = 0.0; break;
  }
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = j + 1; k < m; ++k) {
      const double s = cosine_sim(faces[j].embedding, faces[k].embedding);
      switch (w.intra_aggregation) {
        case Aggregation::max: agg = std::max(agg, s); break;
        case Aggregation::min: agg = std::min(agg, s); break;
        case Aggregation::mean: agg += s; break;
      }
    }
  }
  if (w.intra_aggregation == Aggregation::mean) agg /= static_cast<double>(pair_count(m));
  return std::clamp(1.0 - agg, 0.0, 1.0);
}

/// Leave-one-image-out group diversity.
///
/// All pair similarities over the pooled faces are computed once; the sum over
/// pairs that survive removing image i is the pooled total minus every pair
/// touching one of i's faces. S_{G-i} is 0 when fewer than two faces remain.
inline GroupDiversityResult group_diversity(const GroupRecord& group, const RewardWeights& w) {
  const std::size_t n_images = group.images.size();
  std::vector<const Embedding*> pool;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < n_images; ++i) {
    for (const auto& f : group.images[i].faces) {
      pool.push_back(&f.embedding);
      owner.push_back(i);
    }
  }
  const std::size_t n = pool.size();

  std::vector<CompensatedSum> row(n);
  std::vector<CompensatedSum> within(n_images);
  CompensatedSum total;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double s = cosine_sim(*pool[a], *pool[b]);
      row[a].add(s);
      row[b].add(s);
      total.add(s);
      if (owner[a] == owner[b]) within[owner[a]].add(s);
    }
  }
  const double pooled = total.value();

  GroupDiversityResult out;
  out.stats.s_g = n < 2 ? 0.0 : pooled / static_cast<double>(pair_count(n));
  out.stats.s_g_minus.resize(n_images);
  out.stats.deltas.resize(n_images);
  out.rewards.resize(n_images);

  std::vector<CompensatedSum> touching(n_images);
  for (std::size_t a = 0; a < n; ++a) touching[owner[a]].add(row[a].value());
  for (std::size_t i = 0; i < n_images; ++i) {
    const std::size_t remaining = n - group.images[i].faces.size();
    double s_minus = 0.0;
    if (remaining >= 2) {
      // pairs inside image i appear twice in its row sums
      const double removed = touching[i].value() - within[i].value();
      s_minus = (pooled - removed) / static_cast<double>(pair_count(remaining));
    }
    out.stats.s_g_minus[i] = s_minus;
    out.stats.deltas[i] = out.stats.s_g - s_minus;
    out.rewards[i] = logistic(-w.lambda_sigmoid * out.stats.deltas[i]);
  }
  return out;
}

inline double count_reward(const ImageRecord& img) {
  return static_cast<int>(img.faces.size()) == img.target_count ? 1.0 : 0.0;
}

/// Linear map of the raw quality score onto [0,1], clamped.
inline double quality_reward(const ImageRecord& img, const RewardWeights& w) {
  if (w.zeta == 0.0) return 0.0;
  if (!img.quality_raw) throw MissingQuality(img.image_id);
  return std::clamp((*img.quality_raw - w.q_min) / (w.q_max - w.q_min), 0.0, 1.0);
}

inline std::vector<RewardBreakdown> composite_reward(const GroupRecord& group, const RewardWeights& w) {
  const auto grp = group_diversity(group, w);
  std::vector<RewardBreakdown> out;
  out.reserve(group.images.size());
  for (std::size_t i = 0; i < group.images.size(); ++i) {
    const auto& img = group.images[i];
    RewardBreakdown b;
    b.image_id = img.image_id;
    b.intra = intra_image_diversity(img, w);
    b.group = grp.rewards[i];
    b.count = count_reward(img);
    b.quality = quality_reward(img, w);
    b.total = w.alpha * b.intra + w.beta * b.group + w.gamma * b.count + w.zeta * b.quality;
    b.delta_i = grp.stats.deltas[i];
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace disco
