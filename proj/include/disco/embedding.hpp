#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "disco/error.hpp"

namespace disco {

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double l2_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Unit-norm identity vector. Only constructible through normalize().
class Embedding {
public:
  std::span<const double> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend Embedding normalize(std::span<const double> v);

private:
  explicit Embedding(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

inline constexpr double kZeroNormTolerance = 1e-12;

inline Embedding normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > kZeroNormTolerance)) throw ZeroVector();
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return Embedding(std::move(out));
}

inline Embedding normalize(std::initializer_list<double> v) {
  return normalize(std::span<const double>(v.begin(), v.size()));
}

/// Dot product of two unit vectors, i.e. their cosine similarity.
inline double cosine_sim(const Embedding& u, const Embedding& v) {
  if (u.dim() != v.dim()) throw DimensionMismatch(u.dim(), v.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) s += u[i] * v[i];
  return s;
}

inline std::size_t pair_count(std::size_t n) noexcept { return n < 2 ? 0 : n * (n - 1) / 2; }

/// Above this many faces pair sums switch to compensated accumulation.
inline constexpr std::size_t kCompensationThreshold = 64;

/// Mean similarity over all unordered pairs; 0 when fewer than two faces.
template <class Range, class Proj>
double avg_pairwise_sim(const Range& faces, Proj proj) {
  const std::size_t n = std::size(faces);
  if (n < 2) return 0.0;
  auto it_begin = std::begin(faces);
  if (n <= kCompensationThreshold) {
    double s = 0.0;
    for (auto i = it_begin; i != std::end(faces); ++i)
      for (auto j = std::next(i); j != std::end(faces); ++j) s += cosine_sim(proj(*i), proj(*j));
    return s / static_cast<double>(pair_count(n));
  }
  CompensatedSum s;
  for (auto i = it_begin; i != std::end(faces); ++i)
    for (auto j = std::next(i); j != std::end(faces); ++j) s.add(cosine_sim(proj(*i), proj(*j)));
  return s.value() / static_cast<double>(pair_count(n));
}

inline double avg_pairwise_sim(std::span<const Embedding> faces) {
  return avg_pairwise_sim(faces, [](const Embedding& e) -> const Embedding& { return e; });
}

/// Pixel-space box (x0, y0, x1, y1).
struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool valid() const noexcept { return x0 < x1 && y0 < y1; }
};

struct FaceRecord {
  Embedding embedding;
  double confidence = 1.0;
  std::optional<BoundingBox> bbox;
};

inline double avg_pairwise_sim(std::span<const FaceRecord> faces) {
  return avg_pairwise_sim(faces, [](const FaceRecord& f) -> const Embedding& { return f.embedding; });
}

}  // namespace disco
