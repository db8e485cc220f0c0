#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcl/encoder.hpp"
#include "bcl/error.hpp"
#include "bcl/geometry.hpp"
#include "bcl/rng.hpp"
#include "bcl/synthdata.hpp"

namespace bcl {

/// Slack absorbed by every inequality check.
inline constexpr double kInequalitySlack = 1e-9;

// ---------------------------------------------------------------------------
// Log-sum-exp inequalities

struct LseBoundsResult {
  bool lower_ok = false;
  bool upper_ok = false;
  double lower_slack = 0.0;  // lse - max
  double upper_slack = 0.0;  // max + log(n)/alpha - lse
};

/// max(xs) <= lse_scaled(alpha, xs) <= max(xs) + log(n)/alpha.
inline LseBoundsResult check_lse_bounds(double alpha, std::span<const double> xs) {
  const double lse = lse_scaled(alpha, xs);
  const double mx = *std::max_element(xs.begin(), xs.end());
  LseBoundsResult r;
  r.lower_slack = lse - mx;
  r.upper_slack = mx + std::log(static_cast<double>(xs.size())) / alpha - lse;
  r.lower_ok = r.lower_slack >= -kInequalitySlack;
  r.upper_ok = r.upper_slack >= -kInequalitySlack;
  return r;
}

/// (u(x) + u(y))/2 - u((x + y)/2) for u = lse_scaled(alpha, .); >= 0 by convexity.
inline double lse_convexity_slack(double alpha, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::dimension_mismatch, "convexity check lengths differ");
  Vec mid(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mid[i] = 0.5 * (x[i] + y[i]);
  return 0.5 * (lse_scaled(alpha, x) + lse_scaled(alpha, y)) - lse_scaled(alpha, mid);
}

inline bool check_lse_convexity(double alpha, std::span<const double> x, std::span<const double> y) {
  return lse_convexity_slack(alpha, x, y) >= -kInequalitySlack;
}

/// max(g1) max(g2) - max(g1 g2); requires g1 >= 0 and max(g2) >= 0.
inline double max_product_slack(std::span<const double> g1, std::span<const double> g2) {
  if (g1.size() != g2.size()) throw Error(ErrorCode::dimension_mismatch, "max-product check lengths differ");
  if (g1.empty()) throw Error(ErrorCode::empty_input, "max-product check on empty index set");
  if (std::any_of(g1.begin(), g1.end(), [](double v) { return v < 0.0; })) {
    throw Error(ErrorCode::precondition_violated, "g1 has a negative entry");
  }
  const double max_g2 = *std::max_element(g2.begin(), g2.end());
  if (max_g2 < 0.0) throw Error(ErrorCode::precondition_violated, "max(g2) < 0");
  double max_prod = -INFINITY;
  for (std::size_t i = 0; i < g1.size(); ++i) max_prod = std::max(max_prod, g1[i] * g2[i]);
  return *std::max_element(g1.begin(), g1.end()) * max_g2 - max_prod;
}

inline bool check_max_product(std::span<const double> g1, std::span<const double> g2) {
  return max_product_slack(g1, g2) >= -1e-12;
}

// ---------------------------------------------------------------------------
// Attracting bound: -s(z, mean of views) <= -mean_k s(z, view_k)

struct AttractBoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
  bool precondition_ok = false;  // anchor . mean(views) >= 0 (same hemisphere)
  std::size_t k_views = 0;
};

inline AttractBoundReport attract_bound_gap(const UnitRep& anchor, std::span<const UnitRep> views) {
  if (views.empty()) throw Error(ErrorCode::empty_input, "attract bound needs K >= 1 views");
  const Vec mean = mean_of(views);
  AttractBoundReport r;
  r.k_views = views.size();
  r.lhs = -cosine_similarity(anchor.span(), mean);  // NearZeroNorm on a vanishing mean
  double s = 0.0;
  for (const auto& v : views) s += similarity(anchor, v);
  r.rhs = -s / static_cast<double>(views.size());
  r.gap = r.rhs - r.lhs;
  r.precondition_ok = dot(anchor.span(), mean) >= 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Repelling bound over a finite population of other-class representations,
// treated as the exact law of (T', X'):
//   max_c s(z, mean_c) <= (1/(nu alpha)) log mean_c mean_{r in c} exp(alpha s(z, r))
//                         + (1/(nu alpha)) log n

struct RepelBoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  std::size_t n_classes = 0;
  // (1/alpha) log sum_c mean_{r in c} exp(alpha s) >= 0. The bound's 1/nu
  // scaling step needs this; when it is negative the inequality can fail.
  bool rhs_core_nonnegative = true;
};

using ClassPopulation = std::span<const std::span<const UnitRep>>;

inline RepelBoundReport repel_bound_gap(const UnitRep& anchor, ClassPopulation population,
                                        double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::non_positive_alpha, "alpha must be > 0");
  if (population.size() < 2) {
    throw Error(ErrorCode::precondition_violated, "repel bound needs >= 2 classes");
  }
  const std::size_t per_class = population.front().size();
  for (const auto& cls : population) {
    if (cls.size() != per_class || per_class == 0) {
      throw Error(ErrorCode::unbalanced_classes, "classes must have equal, nonzero counts");
    }
  }

  RepelBoundReport r;
  r.alpha = alpha;
  r.n_classes = population.size();
  r.nu = INFINITY;
  r.lhs = -INFINITY;
  std::vector<double> class_log_means;
  class_log_means.reserve(population.size());
  std::vector<double> sims(per_class);
  for (const auto& cls : population) {
    const Vec mean = mean_of(cls);
    const double mean_norm = norm(mean);
    if (!(mean_norm >= kNormFloor)) {
      throw Error(ErrorCode::near_zero_norm, "class mean representation vanishes");
    }
    r.nu = std::min(r.nu, mean_norm);
    r.lhs = std::max(r.lhs, dot(anchor.span(), mean) / mean_norm);
    for (std::size_t i = 0; i < per_class; ++i) sims[i] = similarity(anchor, cls[i]);
    // alpha * lse_scaled = log sum exp(alpha s); subtract log count for the mean.
    class_log_means.push_back(alpha * lse_scaled(alpha, sims) -
                              std::log(static_cast<double>(per_class)));
  }
  // log sum_c exp(log mean_c) = log(n * mean over classes)
  const double log_n_times_mean = lse_scaled(1.0, class_log_means);
  r.rhs = log_n_times_mean / (r.nu * alpha);
  r.rhs_core_nonnegative = log_n_times_mean >= 0.0;
  r.gap = r.rhs - r.lhs;
  return r;
}

inline RepelBoundReport repel_bound_gap(const UnitRep& anchor,
                                        const std::vector<std::vector<UnitRep>>& population,
                                        double alpha) {
  std::vector<std::span<const UnitRep>> spans(population.begin(), population.end());
  return repel_bound_gap(anchor, ClassPopulation(spans), alpha);
}

// ---------------------------------------------------------------------------
// Bound gaps over a dataset for one encoder

struct GapSummary {
  double attract_mean = 0.0;
  double repel_mean = 0.0;
  std::size_t attract_count = 0;
  std::size_t attract_precondition_failures = 0;
  std::size_t attract_degenerate = 0;  // vanishing view mean, skipped
  std::size_t repel_count = 0;
};

/// Attract gap with K = k_views fresh views per sample; repel gap against a
/// memory bank holding one fresh view of every other-class sample.
inline GapSummary mean_bound_gaps(const MlpParams& params, const SyntheticData& data,
                                  const AugmentationSpec& aug, std::size_t k_views, double alpha,
                                  std::uint64_t seed) {
  if (k_views < 1) throw Error(ErrorCode::precondition_violated, "k_views must be >= 1");
  Rng rng(derive_seed(seed, "bound_gaps"));
  const std::size_t n = data.samples.size();

  std::vector<std::vector<UnitRep>> bank(data.n_classes);
  for (const auto& s : data.samples) bank[s.y].push_back(encode(params, augment(s.x, aug, rng)));

  GapSummary g;
  std::vector<UnitRep> views(k_views);
  std::vector<std::span<const UnitRep>> others;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.samples[i];
    const UnitRep anchor = encode(params, augment(s.x, aug, rng));
    for (auto& v : views) v = encode(params, augment(s.x, aug, rng));
    try {
      const auto a = attract_bound_gap(anchor, views);
      g.attract_mean += a.gap;
      ++g.attract_count;
      if (!a.precondition_ok) ++g.attract_precondition_failures;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::near_zero_norm) throw;
      ++g.attract_degenerate;
    }
    others.clear();
    for (std::size_t c = 0; c < data.n_classes; ++c) {
      if (c != s.y) others.emplace_back(bank[c]);
    }
    g.repel_mean += repel_bound_gap(anchor, ClassPopulation(others), alpha).gap;
    ++g.repel_count;
  }
  if (g.attract_count) g.attract_mean /= static_cast<double>(g.attract_count);
  if (g.repel_count) g.repel_mean /= static_cast<double>(g.repel_count);
  return g;
}

/// One GapSummary per checkpoint. Every checkpoint reuses the same seed, so
/// differences between checkpoints come from the parameters alone.
inline std::vector<GapSummary> gap_curve(const std::vector<MlpParams>& checkpoints,
                                         const SyntheticData& data, const AugmentationSpec& aug,
                                         std::size_t k_views, double alpha, std::uint64_t seed) {
  if (checkpoints.size() < 2) {
    throw Error(ErrorCode::precondition_violated, "gap_curve needs >= 2 checkpoints");
  }
  const auto counts = [&] {
    std::vector<std::size_t> c(data.n_classes, 0);
    for (const auto& s : data.samples) ++c[s.y];
    return c;
  }();
  if (std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) != counts.end()) {
    throw Error(ErrorCode::unbalanced_classes, "gap_curve needs a balanced dataset");
  }
  std::vector<GapSummary> out;
  for (const auto& p : checkpoints) out.push_back(mean_bound_gaps(p, data, aug, k_views, alpha, seed));
  return out;
}

// ---------------------------------------------------------------------------
// Prototype representation bias

struct BiasReport {
  double bias_mc = 0.0;      // E || E_{T,X|Y0} f - E_T f(T(X0)) ||, Monte Carlo
  double bias_single = 0.0;  // mean || f(t_i(x'_i)) - f(t_i(x_i)) ||, x'_i ~ X | y_i
  std::size_t k_samples = 0;
  std::size_t n_points = 0;
};

enum class BiasMode { definition, single_sample };

/// `encoder` maps a raw input to a UnitRep. The definition estimator averages
/// k_samples augmented views per point for the surrogate prototype and takes
/// the class mean of those surrogates as the prototype.
template <typename Encoder>
BiasReport prototype_bias(const Encoder& encoder, const SyntheticData& data,
                          const AugmentationSpec& aug, std::size_t k_samples,
                          std::uint64_t seed) {
  if (k_samples < 1) throw Error(ErrorCode::precondition_violated, "k_samples must be >= 1");
  std::vector<std::vector<std::size_t>> members(data.n_classes);
  for (std::size_t i = 0; i < data.samples.size(); ++i) members[data.samples[i].y].push_back(i);
  for (const auto& m : members) {
    if (m.size() == 1) throw Error(ErrorCode::singleton_class, "class with a single sample");
  }
  const std::size_t n = data.samples.size();
  const std::size_t d = encoder(data.samples.front().x).dim();

  BiasReport r;
  r.k_samples = k_samples;
  r.n_points = n;

  Rng mc_rng(derive_seed(seed, "bias_definition"));
  std::vector<Vec> surrogate(n, Vec(d, 0.0));
  std::vector<Vec> prototype(data.n_classes, Vec(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < k_samples; ++k) {
      const UnitRep z = encoder(augment(data.samples[i].x, aug, mc_rng));
      axpy(1.0 / static_cast<double>(k_samples), z.span(), surrogate[i]);
    }
    const std::size_t y = data.samples[i].y;
    axpy(1.0 / static_cast<double>(members[y].size()), surrogate[i], prototype[y]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    Vec diff = prototype[data.samples[i].y];
    axpy(-1.0, surrogate[i], diff);
    r.bias_mc += norm(diff) / static_cast<double>(n);
  }

  Rng single_rng(derive_seed(seed, "bias_single"));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.samples[i];
    const auto& cls = members[s.y];
    const auto& other = data.samples[cls[single_rng.index(cls.size())]];
    const Transform t = draw_transform(s.x.size(), aug, single_rng);
    Vec diff = encoder(apply_transform(t, other.x)).values();
    axpy(-1.0, encoder(apply_transform(t, s.x)).span(), diff);
    r.bias_single += norm(diff) / static_cast<double>(n);
  }
  return r;
}

template <typename Encoder>
double prototype_bias(const Encoder& encoder, const SyntheticData& data,
                      const AugmentationSpec& aug, std::size_t k_samples, BiasMode mode,
                      std::uint64_t seed) {
  const auto r = prototype_bias(encoder, data, aug, k_samples, seed);
  return mode == BiasMode::definition ? r.bias_mc : r.bias_single;
}

inline auto encoder_fn(const MlpParams& params) {
  return [&params](std::span<const double> x) { return encode(params, x); };
}

}  // namespace bcl
