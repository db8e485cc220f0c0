#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "bcl/diagnostics.hpp"
#include "bcl/rng.hpp"
#include "bcl/synthdata.hpp"

namespace bcl {

enum class Suite { lse_bounds, lse_convexity, max_product, attract_bound, repel_bound };

inline constexpr Suite kAllSuites[] = {Suite::lse_bounds, Suite::lse_convexity, Suite::max_product,
                                       Suite::attract_bound, Suite::repel_bound};

inline std::string_view suite_name(Suite s) {
  switch (s) {
    case Suite::lse_bounds: return "lse_bounds";
    case Suite::lse_convexity: return "lse_convexity";
    case Suite::max_product: return "max_product";
    case Suite::attract_bound: return "attract_bound";
    case Suite::repel_bound: return "repel_bound";
  }
  return "?";
}

inline std::vector<Suite> parse_suites(std::string_view name) {
  if (name == "all") return {std::begin(kAllSuites), std::end(kAllSuites)};
  for (Suite s : kAllSuites) {
    if (suite_name(s) == name) return {s};
  }
  throw Error(ErrorCode::config_invalid, "unknown suite '" + std::string(name) + "'");
}

struct SuiteResult {
  Suite suite = Suite::lse_bounds;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double max_violation = 0.0;  // largest amount by which a bound was exceeded
  double mean_gap = 0.0;       // mean slack over counted trials
  std::size_t skipped = 0;     // attract_bound: hemisphere precondition failed
  // repel_bound only: trials whose log-sum-exp core was negative, and how many of
  // those violated. The published proof does not cover that case.
  std::size_t core_negative = 0;
  std::size_t core_negative_violations = 0;
  double seconds = 0.0;
};

/// Test-only hook: flips the sign of every bound gap.
struct SuiteOptions {
  bool corrupt_gaps = false;
};

namespace detail {

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

inline std::size_t uniform_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.index(hi - lo + 1);
}

inline Vec normal_vec(Rng& rng, std::size_t n, double scale) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Unit vector near `center` with Gaussian spread.
inline UnitRep jitter(Rng& rng, const Vec& center, double spread) {
  for (;;) {
    Vec v = center;
    for (double& x : v) x += spread * rng.normal();
    if (norm(v) >= 1e-6) return normalize(v);
  }
}

struct TrialOutcome {
  double slack = NAN;  // >= 0 means the inequality held; NaN skips
  bool core_negative = false;
};

inline TrialOutcome run_trial(Suite suite, Rng& rng, const SuiteOptions& opt) {
  switch (suite) {
    case Suite::lse_bounds: {
      const double alpha = log_uniform(rng, 0.1, 100.0);
      const auto xs = normal_vec(rng, uniform_count(rng, 2, 64), log_uniform(rng, 0.1, 10.0));
      const auto r = check_lse_bounds(alpha, xs);
      return {std::min(r.lower_slack, r.upper_slack)};
    }
    case Suite::lse_convexity: {
      const double alpha = log_uniform(rng, 0.1, 100.0);
      const std::size_t n = uniform_count(rng, 1, 64);
      const double scale = log_uniform(rng, 0.1, 10.0);
      const auto x = normal_vec(rng, n, scale);
      const auto y = normal_vec(rng, n, scale);
      return {lse_convexity_slack(alpha, x, y)};
    }
    case Suite::max_product: {
      const std::size_t n = uniform_count(rng, 1, 64);
      auto g1 = normal_vec(rng, n, 1.0);
      for (double& v : g1) v = std::abs(v);
      auto g2 = normal_vec(rng, n, 1.0);
      auto& some = g2[rng.index(n)];
      some = std::abs(some);  // max(g2) >= 0
      return {max_product_slack(g1, g2)};
    }
    case Suite::attract_bound: {
      const std::size_t d = uniform_count(rng, 2, 32);
      const std::size_t k = uniform_count(rng, 1, 16);
      const Vec center = detail::normal_vec(rng, d, 1.0);
      const double spread = rng.uniform(0.0, 2.0);
      const UnitRep anchor = jitter(rng, center, spread);
      std::vector<UnitRep> views;
      for (std::size_t i = 0; i < k; ++i) views.push_back(jitter(rng, center, spread));
      try {
        const auto r = attract_bound_gap(anchor, views);
        if (!r.precondition_ok) return {};
        return {opt.corrupt_gaps ? -r.gap : r.gap};
      } catch (const Error& e) {
        if (e.code() == ErrorCode::near_zero_norm) return {};
        throw;
      }
    }
    case Suite::repel_bound: {
      const std::size_t d = uniform_count(rng, 2, 32);
      const std::size_t classes = uniform_count(rng, 2, 16);
      const std::size_t per_class = uniform_count(rng, 2, 32);
      const double alpha = rng.uniform(0.5, 16.0);
      const UnitRep anchor = jitter(rng, normal_vec(rng, d, 1.0), 0.0);
      std::vector<std::vector<UnitRep>> population(classes);
      for (auto& cls : population) {
        const Vec center = normal_vec(rng, d, 1.0);
        const double spread = rng.uniform(0.0, 2.0);
        for (std::size_t i = 0; i < per_class; ++i) cls.push_back(jitter(rng, center, spread));
      }
      try {
        const auto r = repel_bound_gap(anchor, population, alpha);
        return {opt.corrupt_gaps ? -r.gap : r.gap, !r.rhs_core_nonnegative};
      } catch (const Error& e) {
        if (e.code() == ErrorCode::near_zero_norm) return {};
        throw;
      }
    }
  }
  return {};
}

}  // namespace detail

/// Randomized inequality suite. Trial i draws from derive_seed(seed, suite, i),
/// so results do not depend on how trials are scheduled.
inline SuiteResult run_suite(Suite suite, std::size_t trials, std::uint64_t seed,
                             const SuiteOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r;
  r.suite = suite;
  r.trials = trials;
  const double tol = suite == Suite::max_product ? 1e-12 : kInequalitySlack;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng(derive_seed(seed, suite_name(suite), i));
    const auto t = detail::run_trial(suite, rng, opt);
    if (std::isnan(t.slack)) {
      ++r.skipped;
      continue;
    }
    ++counted;
    r.mean_gap += t.slack;
    if (t.core_negative) ++r.core_negative;
    if (t.slack < -tol) {
      ++r.violations;
      r.max_violation = std::max(r.max_violation, -t.slack);
      if (t.core_negative) ++r.core_negative_violations;
    }
  }
  if (counted) r.mean_gap /= static_cast<double>(counted);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace bcl
