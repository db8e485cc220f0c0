#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bcl/error.hpp"
#include "bcl/geometry.hpp"

namespace bcl {

enum class LossKind { ntxent, decoupled, balanced, generalized };

inline std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::ntxent: return "ntxent";
    case LossKind::decoupled: return "decoupled";
    case LossKind::balanced: return "balanced";
    case LossKind::generalized: return "generalized";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::ntxent, LossKind::decoupled, LossKind::balanced,
                     LossKind::generalized}) {
    if (loss_name(k) == name) return k;
  }
  throw Error(ErrorCode::config_invalid, "unknown loss '" + std::string(name) + "'");
}

/// alpha is the inverse temperature; lambda weights the repelling term and
/// already absorbs the 1/nu factor of the repelling bound.
struct LossParams {
  double alpha = 4.0;
  double lambda = 2.0;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw Error(ErrorCode::non_positive_alpha, "alpha must be positive and finite");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw Error(ErrorCode::precondition_violated, "lambda must be positive and finite");
    }
  }
};

/// m positive pairs (z_i, z'_i).
struct BatchViews {
  std::vector<UnitRep> z;
  std::vector<UnitRep> z_prime;

  std::size_t size() const noexcept { return z.size(); }

  void validate() const {
    if (z.size() != z_prime.size()) {
      throw Error(ErrorCode::dimension_mismatch, "views have different lengths");
    }
    if (z.size() < 2) throw Error(ErrorCode::precondition_violated, "batch needs m >= 2");
    const std::size_t d = z.front().dim();
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i].dim() != d || z_prime[i].dim() != d) {
        throw Error(ErrorCode::dimension_mismatch, "representation dimensions differ");
      }
    }
  }

  /// Flattened layout used by the loss kernels: z_0..z_{m-1}, z'_0..z'_{m-1}.
  std::vector<Vec> stacked() const {
    std::vector<Vec> out;
    out.reserve(2 * size());
    for (const auto& r : z) out.push_back(r.values());
    for (const auto& r : z_prime) out.push_back(r.values());
    return out;
  }
};

struct LossBreakdown {
  double total = 0.0;
  double attract = 0.0;
  double repel = 0.0;
  std::vector<double> per_anchor;
};

struct RepGradients {
  std::vector<Vec> d_z;
  std::vector<Vec> d_z_prime;
};

namespace detail {

// Anchor k in the stacked layout, its positive and its repelling set.
struct AnchorTerm {
  std::size_t anchor;
  std::size_t positive;
  std::vector<std::size_t> repel_set;
};

inline std::vector<AnchorTerm> anchor_terms(LossKind kind, std::size_t m) {
  std::vector<AnchorTerm> terms;
  const std::size_t n = 2 * m;
  if (kind == LossKind::decoupled) {
    // First-view anchors against cross-view negatives only.
    for (std::size_t i = 0; i < m; ++i) {
      AnchorTerm t{i, m + i, {}};
      for (std::size_t j = 0; j < m; ++j) {
        if (j != i) t.repel_set.push_back(m + j);
      }
      terms.push_back(std::move(t));
    }
    return terms;
  }
  for (std::size_t k = 0; k < n; ++k) {
    AnchorTerm t{k, (k + m) % n, {}};
    for (std::size_t l = 0; l < n; ++l) {
      if (l == k) continue;
      if (kind == LossKind::balanced && l == t.positive) continue;
      t.repel_set.push_back(l);
    }
    terms.push_back(std::move(t));
  }
  return terms;
}

// NT-Xent and the decoupled form have no separate lambda.
inline double effective_lambda(LossKind kind, const LossParams& p) {
  return (kind == LossKind::ntxent || kind == LossKind::decoupled) ? 1.0 : p.lambda;
}

/// Loss on the stacked layout without unit-norm checks; similarities are plain
/// dot products so finite differences can perturb the inputs freely.
inline LossBreakdown evaluate_stacked(std::span<const Vec> reps, LossKind kind,
                                      const LossParams& p) {
  const std::size_t m = reps.size() / 2;
  const double lambda = effective_lambda(kind, p);
  const auto terms = anchor_terms(kind, m);
  LossBreakdown out;
  out.per_anchor.reserve(terms.size());
  std::vector<double> sims;
  for (const auto& t : terms) {
    const double s_pos = dot(reps[t.anchor], reps[t.positive]);
    sims.clear();
    for (std::size_t j : t.repel_set) sims.push_back(dot(reps[t.anchor], reps[j]));
    const double repel = lse_scaled(p.alpha, sims);
    out.attract += -s_pos;
    out.repel += repel;
    out.per_anchor.push_back(-s_pos + lambda * repel);
  }
  const double count = static_cast<double>(terms.size());
  out.attract /= count;
  out.repel /= count;
  for (double v : out.per_anchor) out.total += v;
  out.total /= count;
  return out;
}

struct StackedGradients {
  std::vector<Vec> attract;
  std::vector<Vec> repel;
};

/// Gradients of the mean attract and mean repel terms, each unscaled by lambda.
inline StackedGradients gradient_stacked(std::span<const Vec> reps, LossKind kind,
                                         const LossParams& p) {
  const std::size_t n = reps.size();
  const std::size_t d = reps.front().size();
  const auto terms = anchor_terms(kind, n / 2);
  const double inv_count = 1.0 / static_cast<double>(terms.size());
  StackedGradients g{std::vector<Vec>(n, Vec(d, 0.0)), std::vector<Vec>(n, Vec(d, 0.0))};
  std::vector<double> weights;
  for (const auto& t : terms) {
    axpy(-inv_count, reps[t.positive], g.attract[t.anchor]);
    axpy(-inv_count, reps[t.anchor], g.attract[t.positive]);

    // d/ds_j of (1/alpha) log sum exp(alpha s_j) is softmax(alpha s)_j.
    weights.clear();
    double mx = -INFINITY;
    for (std::size_t j : t.repel_set) {
      weights.push_back(p.alpha * dot(reps[t.anchor], reps[j]));
      mx = std::max(mx, weights.back());
    }
    double sum = 0.0;
    for (double& w : weights) {
      w = std::exp(w - mx);
      sum += w;
    }
    for (std::size_t q = 0; q < t.repel_set.size(); ++q) {
      const double w = inv_count * weights[q] / sum;
      axpy(w, reps[t.repel_set[q]], g.repel[t.anchor]);
      axpy(w, reps[t.anchor], g.repel[t.repel_set[q]]);
    }
  }
  return g;
}

inline std::vector<Vec> total_gradient_stacked(std::span<const Vec> reps, LossKind kind,
                                               const LossParams& p) {
  auto g = gradient_stacked(reps, kind, p);
  const double lambda = effective_lambda(kind, p);
  for (std::size_t k = 0; k < g.attract.size(); ++k) axpy(lambda, g.repel[k], g.attract[k]);
  return std::move(g.attract);
}

inline RepGradients unstack(std::vector<Vec> stacked) {
  const std::size_t m = stacked.size() / 2;
  RepGradients out;
  out.d_z.assign(std::make_move_iterator(stacked.begin()),
                 std::make_move_iterator(stacked.begin() + static_cast<std::ptrdiff_t>(m)));
  out.d_z_prime.assign(std::make_move_iterator(stacked.begin() + static_cast<std::ptrdiff_t>(m)),
                       std::make_move_iterator(stacked.end()));
  return out;
}

}  // namespace detail

/// Selector-driven entry point. For ntxent the temperature is 1/p.alpha and
/// lambda is ignored; decoupled also ignores lambda.
///
/// Every loss is reported as the mean over anchors of
///   -s(z, z+) + lambda * (1/alpha) log sum_{z- in S(z)} exp(alpha s(z, z-)),
/// i.e. the log-ratio bracket divided by alpha. With that single convention
/// the generalized loss at lambda = 1 equals NT-Xent anchor by anchor.
inline LossBreakdown evaluate_loss(const BatchViews& batch, LossKind kind, const LossParams& p) {
  batch.validate();
  p.validate();
  const auto reps = batch.stacked();
  return detail::evaluate_stacked(reps, kind, p);
}

/// NT-Xent with both views as anchors; the denominator runs over all 2m - 1
/// other representations, positive included.
inline LossBreakdown ntxent_loss(const BatchViews& batch, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::non_positive_alpha, "tau must be > 0");
  return evaluate_loss(batch, LossKind::ntxent, LossParams{1.0 / tau, 1.0});
}

/// Decoupled form: first-view anchors, cross-view negatives z'_j (j != i).
inline LossBreakdown decoupled_loss(const BatchViews& batch, double alpha) {
  return evaluate_loss(batch, LossKind::decoupled, LossParams{alpha, 1.0});
}

/// Repelling set is the 2(m-1) representations of the other images.
inline LossBreakdown balanced_contrastive_loss(const BatchViews& batch, const LossParams& p) {
  return evaluate_loss(batch, LossKind::balanced, p);
}

/// Balanced loss with the positive (and every other non-anchor) in the repelling set.
inline LossBreakdown generalized_ntxent_loss(const BatchViews& batch, const LossParams& p) {
  return evaluate_loss(batch, LossKind::generalized, p);
}

inline RepGradients loss_grad_wrt_reps(const BatchViews& batch, const LossParams& p,
                                       LossKind kind) {
  batch.validate();
  p.validate();
  const auto reps = batch.stacked();
  return detail::unstack(detail::total_gradient_stacked(reps, kind, p));
}

struct ComponentGradients {
  RepGradients attract;
  RepGradients repel;
};

inline ComponentGradients loss_grad_components(const BatchViews& batch, const LossParams& p,
                                               LossKind kind) {
  batch.validate();
  p.validate();
  const auto reps = batch.stacked();
  auto g = detail::gradient_stacked(reps, kind, p);
  return {detail::unstack(std::move(g.attract)), detail::unstack(std::move(g.repel))};
}

/// Total loss for one anchor:
///   mean_k [ -s(a, v_k) + (lambda/nu)(1/alpha) log sum_n exp(alpha s(a, n)) ].
/// Also evaluates the rearranged log-ratio form and throws std::logic_error if
/// the two disagree beyond 1e-9.
inline double total_loss_theoretical(const UnitRep& anchor, std::span<const UnitRep> views,
                                     std::span<const UnitRep> negatives, double alpha,
                                     double lambda_over_nu) {
  if (views.empty() || negatives.empty()) {
    throw Error(ErrorCode::empty_input, "views and negatives must be nonempty");
  }
  if (!(alpha > 0.0)) throw Error(ErrorCode::non_positive_alpha, "alpha must be > 0");
  if (!(lambda_over_nu > 0.0)) {
    throw Error(ErrorCode::precondition_violated, "lambda/nu must be > 0");
  }

  std::vector<double> neg_sims;
  neg_sims.reserve(negatives.size());
  for (const auto& n : negatives) neg_sims.push_back(similarity(anchor, n));
  const double repel = lse_scaled(alpha, neg_sims);

  double direct = 0.0;
  for (const auto& v : views) direct += -similarity(anchor, v) + lambda_over_nu * repel;
  direct /= static_cast<double>(views.size());

  // Log-ratio form: -log( exp(alpha s+) / (sum exp(alpha s-))^(lambda/nu) ) / alpha.
  // The numerator is shifted by alpha (s+ <= 1 on the sphere) and the
  // denominator by its largest exponent so the ratio stays representable.
  const double neg_shift = alpha * *std::max_element(neg_sims.begin(), neg_sims.end());
  double denom = 0.0;
  for (double s : neg_sims) denom += std::exp(alpha * s - neg_shift);
  double ratio_form = 0.0;
  for (const auto& v : views) {
    const double ratio =
        std::exp(alpha * (similarity(anchor, v) - 1.0)) / std::pow(denom, lambda_over_nu);
    ratio_form += -(std::log(ratio) + alpha - lambda_over_nu * neg_shift);
  }
  ratio_form /= alpha * static_cast<double>(views.size());

  if (std::abs(direct - ratio_form) > 1e-9 * std::max(1.0, std::abs(direct))) {
    throw std::logic_error("total loss forms disagree: " + std::to_string(direct) + " vs " +
                           std::to_string(ratio_form));
  }
  return direct;
}

}  // namespace bcl
