#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bcl/error.hpp"

namespace bcl {

using Vec = std::vector<double>;

/// Norms below this are treated as representation collapse.
inline constexpr double kNormFloor = 1e-9;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "dot of lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// A representation on the unit sphere. Only constructible through
/// normalize() or an explicit checked adoption of an already-unit vector.
class UnitRep {
 public:
  UnitRep() = default;

  /// Adopts `values` as-is after checking | ||values|| - 1 | <= 1e-9.
  static UnitRep adopt(Vec values) {
    const double n = norm(values);
    if (!(std::abs(n - 1.0) <= 1e-9)) {
      throw Error(ErrorCode::precondition_violated,
                  "vector is not unit norm (norm " + std::to_string(n) + ")");
    }
    UnitRep u;
    u.values_ = std::move(values);
    return u;
  }

  const Vec& values() const noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const UnitRep&, const UnitRep&) = default;

 private:
  friend UnitRep normalize(std::span<const double> v);
  Vec values_;
};

inline UnitRep normalize(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::empty_input, "normalize of empty vector");
  const double n = norm(v);
  if (!(n >= kNormFloor)) {
    throw Error(ErrorCode::near_zero_norm, "norm " + std::to_string(n) + " below 1e-9");
  }
  UnitRep u;
  u.values_.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) u.values_[i] = v[i] / n;
  return u;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na >= kNormFloor) || !(nb >= kNormFloor)) {
    throw Error(ErrorCode::near_zero_norm, "cosine similarity of a collapsed vector");
  }
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

/// On unit inputs this is the similarity dot product.
inline double similarity(const UnitRep& a, const UnitRep& b) { return dot(a.span(), b.span()); }

/// -||a - b||^2; equals -2 + 2 a.b on the sphere.
inline double neg_sq_euclidean(const UnitRep& a, const UnitRep& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::dimension_mismatch, "neg_sq_euclidean");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return -s;
}

/// (1/alpha) log sum_i exp(alpha x_i), evaluated with max-subtraction.
inline double lse_scaled(double alpha, std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorCode::empty_input, "lse_scaled of empty sequence");
  if (!(alpha > 0.0)) throw Error(ErrorCode::non_positive_alpha, "alpha must be > 0");
  const double mx = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(alpha * (x - mx));
  return mx + std::log(sum) / alpha;
}

// Arithmetic helpers shared by the other modules.

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vec mean_of(std::span<const UnitRep> reps) {
  if (reps.empty()) throw Error(ErrorCode::empty_input, "mean of empty set");
  Vec m(reps.front().dim(), 0.0);
  for (const auto& r : reps) axpy(1.0, r.span(), m);
  for (double& v : m) v /= static_cast<double>(reps.size());
  return m;
}

}  // namespace bcl
