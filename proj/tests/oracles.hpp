#pragma once

// Independent reference implementations used only by the tests. Everything
// here is written the slow, literal way: direct exponentials, explicit loops
// over index sets, no shared kernels with the library.

#include <cmath>
#include <functional>
#include <string_view>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// (1/alpha) log sum exp(alpha x), no max-subtraction.
inline double naive_lse(double alpha, const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += std::exp(alpha * x);
  return std::log(s) / alpha;
}

/// Textbook SimCLR cross-entropy averaged over the 2m anchors, with
/// similarities taken as plain dot products. `reps` is z_0..z_{m-1}, z'_0..z'_{m-1}.
inline double simclr_cross_entropy(const Mat& reps, double tau) {
  const std::size_t n = reps.size();
  const std::size_t m = n / 2;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pos = k < m ? k + m : k - m;
    double denom = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      if (l != k) denom += std::exp(dot(reps[k], reps[l]) / tau);
    }
    total += -std::log(std::exp(dot(reps[k], reps[pos]) / tau) / denom);
  }
  return total / static_cast<double>(n);
}

/// -s(z, z+) + lambda (1/alpha) log sum over the chosen repelling set, averaged
/// over anchors. include_positive selects the generalized variant.
inline double balanced_naive(const Mat& reps, double alpha, double lambda, bool include_positive) {
  const std::size_t n = reps.size();
  const std::size_t m = n / 2;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pos = k < m ? k + m : k - m;
    double sum = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      if (l == k) continue;
      if (l == pos && !include_positive) continue;
      sum += std::exp(alpha * dot(reps[k], reps[l]));
    }
    total += -dot(reps[k], reps[pos]) + lambda * std::log(sum) / alpha;
  }
  return total / static_cast<double>(n);
}

/// First-view anchors, cross-view negatives j != i, divided by alpha.
inline double decoupled_naive(const Mat& reps, double alpha) {
  const std::size_t m = reps.size() / 2;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) denom += std::exp(alpha * dot(reps[i], reps[m + j]));
    }
    total += -std::log(std::exp(alpha * dot(reps[i], reps[m + i])) / denom) / alpha;
  }
  return total / static_cast<double>(m);
}

/// Dispatch by selector name. NT-Xent is reported as tau * cross-entropy.
inline double loss_by_name(std::string_view name, const Mat& reps, double alpha, double lambda) {
  if (name == "ntxent") return simclr_cross_entropy(reps, 1.0 / alpha) / alpha;
  if (name == "decoupled") return decoupled_naive(reps, alpha);
  if (name == "balanced") return balanced_naive(reps, alpha, lambda, false);
  if (name == "generalized") return balanced_naive(reps, alpha, lambda, true);
  return NAN;
}

/// Central differences; the callback sees the perturbed coordinate in place.
inline std::vector<double> central_difference(std::vector<double*> coords,
                                              const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g;
  g.reserve(coords.size());
  for (double* c : coords) {
    const double orig = *c;
    *c = orig + h;
    const double up = f();
    *c = orig - h;
    const double down = f();
    *c = orig;
    g.push_back((up - down) / (2.0 * h));
  }
  return g;
}

/// |a - b| / max(1, |a|, |b|): relative for large entries, absolute near zero.
inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace oracle
