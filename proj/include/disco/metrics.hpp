#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disco/embedding.hpp"
#include "disco/error.hpp"
#include "disco/records.hpp"

namespace disco {

struct MetricsConfig {
  double dup_threshold = 0.5;  // kappa_dup; similarity >= threshold means same identity
  double det_threshold = 0.7;  // faces below this confidence are ignored

  void validate() const {
    if (!(dup_threshold > 0.0 && dup_threshold < 1.0))
      throw InvalidArgument("dup_threshold must lie in (0,1)");
  }
};

struct MetricValues {
  double count_accuracy_pct = 0;
  double ufa_pct = 0;
  double gis_pct = 0;
  std::size_t n_images = 0;
  std::size_t n_count_correct = 0;
  std::size_t n_duplicate_free = 0;
  std::size_t n_clusters = 0;
  std::size_t total_requested = 0;
};

struct MetricsReport {
  double count_accuracy_pct = 0;
  double ufa_pct = 0;
  double gis_pct = 0;
  std::size_t n_images = 0;
  std::size_t n_clusters = 0;
  std::size_t total_requested = 0;
  MetricValues overall;
  std::map<int, MetricValues> per_count;
  std::optional<std::map<std::string, MetricValues>> per_tag;
};

namespace detail {

inline std::vector<const Embedding*> detected(const ImageRecord& img, const MetricsConfig& cfg) {
  std::vector<const Embedding*> out;
  for (const auto& f : img.faces)
    if (f.confidence >= cfg.det_threshold) out.push_back(&f.embedding);
  return out;
}

inline bool has_duplicate(const std::vector<const Embedding*>& faces, double threshold) {
  for (std::size_t j = 0; j < faces.size(); ++j)
    for (std::size_t k = j + 1; k < faces.size(); ++k)
      if (cosine_sim(*faces[j], *faces[k]) >= threshold) return true;
  return false;
}

template <class Images>
void require_nonempty(const Images& images) {
  if (std::size(images) == 0) throw EmptyDataset();
}

}  // namespace detail

inline double count_accuracy(std::span<const ImageRecord> images, const MetricsConfig& cfg = {}) {
  detail::require_nonempty(images);
  std::size_t hits = 0;
  for (const auto& img : images)
    if (static_cast<int>(detail::detected(img, cfg).size()) == img.target_count) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(images.size());
}

inline double unique_face_accuracy(std::span<const ImageRecord> images, const MetricsConfig& cfg = {}) {
  detail::require_nonempty(images);
  std::size_t clean = 0;
  for (const auto& img : images)
    if (!detail::has_duplicate(detail::detected(img, cfg), cfg.dup_threshold)) ++clean;
  return 100.0 * static_cast<double>(clean) / static_cast<double>(images.size());
}

/// Single-linkage identity clusters at a similarity threshold: the connected
/// components of the graph whose edges join faces with similarity >= threshold.
/// Returns a component label per face, labels numbered from 0 in first-seen order.
inline std::vector<std::size_t> identity_clusters(std::span<const Embedding* const> faces, double threshold) {
  const std::size_t n = faces.size();
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(n, unset);
  std::vector<std::size_t> stack;
  std::size_t next = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (label[seed] != unset) continue;
    label[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < n; ++b) {
        if (label[b] != unset) continue;
        if (cosine_sim(*faces[a], *faces[b]) >= threshold) {
          label[b] = next;
          stack.push_back(b);
        }
      }
    }
    ++next;
  }
  return label;
}

struct SpreadResult {
  double gis_pct = 0;
  std::size_t n_clusters = 0;
  std::size_t total_requested = 0;
};

inline SpreadResult global_identity_spread(std::span<const ImageRecord> images, const MetricsConfig& cfg = {}) {
  detail::require_nonempty(images);
  std::vector<const Embedding*> pool;
  SpreadResult r;
  for (const auto& img : images) {
    auto faces = detail::detected(img, cfg);
    pool.insert(pool.end(), faces.begin(), faces.end());
    r.total_requested += static_cast<std::size_t>(img.target_count);
  }
  if (pool.empty()) return r;
  const auto labels = identity_clusters(pool, cfg.dup_threshold);
  std::size_t c = 0;
  for (std::size_t l : labels) c = std::max(c, l + 1);
  r.n_clusters = c;
  r.gis_pct = 100.0 * static_cast<double>(c) / static_cast<double>(r.total_requested);
  return r;
}

inline MetricValues compute_metrics(std::span<const ImageRecord> images, const MetricsConfig& cfg = {}) {
  detail::require_nonempty(images);
  MetricValues v;
  v.n_images = images.size();
  for (const auto& img : images) {
    const auto faces = detail::detected(img, cfg);
    if (static_cast<int>(faces.size()) == img.target_count) ++v.n_count_correct;
    if (!detail::has_duplicate(faces, cfg.dup_threshold)) ++v.n_duplicate_free;
  }
  const auto spread = global_identity_spread(images, cfg);
  v.n_clusters = spread.n_clusters;
  v.total_requested = spread.total_requested;
  v.gis_pct = spread.gis_pct;
  const double n = static_cast<double>(v.n_images);
  v.count_accuracy_pct = 100.0 * static_cast<double>(v.n_count_correct) / n;
  v.ufa_pct = 100.0 * static_cast<double>(v.n_duplicate_free) / n;
  return v;
}

inline constexpr const char* kUntagged = "untagged";

/// Aggregate report plus per-person-count and (when any image is tagged) per-tag splits.
inline MetricsReport evaluate(std::span<const ImageRecord> images, const MetricsConfig& cfg = {}) {
  cfg.validate();
  MetricsReport rep;
  rep.overall = compute_metrics(images, cfg);
  rep.count_accuracy_pct = rep.overall.count_accuracy_pct;
  rep.ufa_pct = rep.overall.ufa_pct;
  rep.gis_pct = rep.overall.gis_pct;
  rep.n_images = rep.overall.n_images;
  rep.n_clusters = rep.overall.n_clusters;
  rep.total_requested = rep.overall.total_requested;

  std::map<int, std::vector<ImageRecord>> by_count;
  std::map<std::string, std::vector<ImageRecord>> by_tag;
  bool any_tag = false;
  for (const auto& img : images) {
    by_count[img.target_count].push_back(img);
    any_tag = any_tag || img.tag.has_value();
    by_tag[img.tag.value_or(kUntagged)].push_back(img);
  }
  for (const auto& [n, subset] : by_count) rep.per_count[n] = compute_metrics(subset, cfg);
  if (any_tag) {
    rep.per_tag.emplace();
    for (const auto& [tag, subset] : by_tag) (*rep.per_tag)[tag] = compute_metrics(subset, cfg);
  }
  return rep;
}

}  // namespace disco
