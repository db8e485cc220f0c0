#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bcl/error.hpp"
#include "bcl/geometry.hpp"
#include "bcl/rng.hpp"

namespace bcl {

enum class ClassDistribution { uniform, pareto };

struct DatasetSpec {
  std::size_t n_classes = 8;
  std::size_t d_in = 32;
  std::size_t total_samples = 2000;
  double class_noise_sigma = 0.1;
  ClassDistribution distribution = ClassDistribution::uniform;
  double pareto_shape = 6.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_classes < 1 || d_in < 1) throw Error(ErrorCode::config_invalid, "empty dataset shape");
    if (total_samples < n_classes) {
      throw Error(ErrorCode::config_invalid, "total_samples < n_classes");
    }
    if (!(class_noise_sigma >= 0.0)) throw Error(ErrorCode::config_invalid, "noise sigma < 0");
    if (distribution == ClassDistribution::uniform && total_samples % n_classes != 0) {
      throw Error(ErrorCode::config_invalid, "uniform mode needs n_classes | total_samples");
    }
    if (distribution == ClassDistribution::pareto && !(pareto_shape > 0.0)) {
      throw Error(ErrorCode::config_invalid, "pareto shape must be > 0");
    }
  }
};

struct LabeledSample {
  Vec x;
  std::size_t y = 0;
};

struct SyntheticData {
  std::vector<LabeledSample> samples;
  std::vector<Vec> prototypes;
  std::size_t n_classes = 0;
  std::size_t d_in = 0;
};

/// Class sizes proportional to rank^(-1/shape), rounded by largest remainder
/// to sum exactly to `total`, every class kept at >= 1, nonincreasing.
inline std::vector<std::size_t> pareto_counts(std::size_t n_classes, std::size_t total,
                                              double shape) {
  if (n_classes == 0 || total < n_classes || !(shape > 0.0)) {
    throw Error(ErrorCode::config_invalid, "pareto_counts needs shape > 0, total >= n_classes");
  }
  std::vector<double> w(n_classes);
  for (std::size_t r = 0; r < n_classes; ++r) {
    w[r] = std::pow(static_cast<double>(r + 1), -1.0 / shape);
  }
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::size_t> counts(n_classes);
  std::vector<double> frac(n_classes);
  std::size_t assigned = 0;
  for (std::size_t r = 0; r < n_classes; ++r) {
    const double q = static_cast<double>(total) * w[r] / wsum;
    counts[r] = static_cast<std::size_t>(std::floor(q));
    frac[r] = q - std::floor(q);
    assigned += counts[r];
  }
  std::vector<std::size_t> order(n_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % n_classes]];

  // Lift empty tail classes by borrowing from the head.
  for (std::size_t r = n_classes; r-- > 0;) {
    while (counts[r] == 0) {
      auto head = std::max_element(counts.begin(), counts.end());
      --*head;
      ++counts[r];
    }
  }
  std::sort(counts.begin(), counts.end(), std::greater<>());
  return counts;
}

inline std::vector<std::size_t> class_counts(const DatasetSpec& spec) {
  if (spec.distribution == ClassDistribution::uniform) {
    return std::vector<std::size_t>(spec.n_classes, spec.total_samples / spec.n_classes);
  }
  return pareto_counts(spec.n_classes, spec.total_samples, spec.pareto_shape);
}

inline Vec random_unit(std::size_t d, Rng& rng) {
  for (;;) {
    Vec v(d);
    for (double& x : v) x = rng.normal();
    if (norm(v) > 1e-6) return normalize(v).values();
  }
}

/// Unit prototype directions with pairwise cosine <= 0.9.
inline std::vector<Vec> draw_prototypes(std::size_t n_classes, std::size_t d, Rng& rng) {
  std::vector<Vec> protos;
  std::size_t attempts = 0;
  while (protos.size() < n_classes) {
    if (++attempts > 100000) {
      throw Error(ErrorCode::config_invalid, "cannot separate prototypes in this dimension");
    }
    Vec v = random_unit(d, rng);
    const bool ok = std::all_of(protos.begin(), protos.end(),
                                [&](const Vec& p) { return dot(p, v) <= 0.9; });
    if (ok) protos.push_back(std::move(v));
  }
  return protos;
}

inline LabeledSample draw_sample(const Vec& prototype, std::size_t y, double sigma, Rng& rng) {
  LabeledSample s{prototype, y};
  if (sigma > 0.0) {
    for (double& v : s.x) v += sigma * rng.normal();
  }
  return s;
}

/// Samples are stored class-major (all of class 0, then class 1, ...).
inline SyntheticData generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  SyntheticData data;
  data.n_classes = spec.n_classes;
  data.d_in = spec.d_in;
  Rng proto_rng(derive_seed(spec.seed, "prototypes"));
  data.prototypes = draw_prototypes(spec.n_classes, spec.d_in, proto_rng);
  const auto counts = class_counts(spec);
  data.samples.reserve(spec.total_samples);
  for (std::size_t y = 0; y < spec.n_classes; ++y) {
    Rng rng(derive_seed(spec.seed, "class", y));
    for (std::size_t i = 0; i < counts[y]; ++i) {
      data.samples.push_back(draw_sample(data.prototypes[y], y, spec.class_noise_sigma, rng));
    }
  }
  return data;
}

/// Balanced held-out split sharing the training prototypes.
inline SyntheticData generate_test_set(const DatasetSpec& spec, const SyntheticData& train,
                                       std::size_t per_class) {
  SyntheticData test;
  test.n_classes = train.n_classes;
  test.d_in = train.d_in;
  test.prototypes = train.prototypes;
  for (std::size_t y = 0; y < train.n_classes; ++y) {
    Rng rng(derive_seed(spec.seed, "test_class", y));
    for (std::size_t i = 0; i < per_class; ++i) {
      test.samples.push_back(draw_sample(train.prototypes[y], y, spec.class_noise_sigma, rng));
    }
  }
  return test;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentationSpec {
  double noise_sigma = 0.0;
  double rotation_angle_max = 0.0;  // radians
  double mask_prob = 0.0;
  bool noise_enabled = true;
  bool rotation_enabled = true;
  bool mask_enabled = true;

  void validate() const {
    if (!(noise_sigma >= 0.0) || !(rotation_angle_max >= 0.0)) {
      throw Error(ErrorCode::config_invalid, "augmentation magnitudes must be >= 0");
    }
    if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
      throw Error(ErrorCode::config_invalid, "mask_prob must lie in [0, 1]");
    }
  }

  bool is_identity() const {
    return !(noise_enabled && noise_sigma > 0.0) &&
           !(rotation_enabled && rotation_angle_max > 0.0) && !(mask_enabled && mask_prob > 0.0);
  }
};

/// A single sampled transformation t ~ T, reusable on several inputs.
struct Transform {
  Vec noise;            // empty when noise is off
  double angle = 0.0;   // rotation in the plane span(u, v)
  Vec u, v;             // empty when rotation is off
  std::vector<bool> keep;  // empty when masking is off
};

inline Transform draw_transform(std::size_t d, const AugmentationSpec& aug, Rng& rng) {
  Transform t;
  if (aug.noise_enabled && aug.noise_sigma > 0.0) {
    t.noise.resize(d);
    for (double& e : t.noise) e = aug.noise_sigma * rng.normal();
  }
  if (aug.rotation_enabled && aug.rotation_angle_max > 0.0 && d >= 2) {
    t.angle = rng.uniform(0.0, aug.rotation_angle_max);
    t.u = random_unit(d, rng);
    t.v = random_unit(d, rng);
    // Gram-Schmidt; redraw in the measure-zero parallel case.
    for (;;) {
      axpy(-dot(t.u, t.v), t.u, t.v);
      const double nv = norm(t.v);
      if (nv > 1e-6) {
        for (double& e : t.v) e /= nv;
        break;
      }
      t.v = random_unit(d, rng);
    }
  }
  if (aug.mask_enabled && aug.mask_prob > 0.0) {
    t.keep.resize(d);
    for (std::size_t i = 0; i < d; ++i) t.keep[i] = !(rng.uniform() < aug.mask_prob);
  }
  return t;
}

/// Noise, then rotation, then masking.
inline Vec apply_transform(const Transform& t, std::span<const double> x) {
  Vec out(x.begin(), x.end());
  const std::size_t d = out.size();
  if (!t.noise.empty()) axpy(1.0, t.noise, out);
  if (!t.u.empty()) {
    const double a = dot(out, t.u);
    const double b = dot(out, t.v);
    const double c = std::cos(t.angle) - 1.0;
    const double s = std::sin(t.angle);
    for (std::size_t i = 0; i < d; ++i) {
      out[i] += c * (a * t.u[i] + b * t.v[i]) + s * (a * t.v[i] - b * t.u[i]);
    }
  }
  if (!t.keep.empty()) {
    for (std::size_t i = 0; i < d; ++i) {
      if (!t.keep[i]) out[i] = 0.0;
    }
  }
  return out;
}

/// One draw t ~ T applied to x. Labels are untouched: augmentation acts on
/// the vector only.
inline Vec augment(std::span<const double> x, const AugmentationSpec& aug, Rng& rng) {
  if (aug.is_identity()) return Vec(x.begin(), x.end());
  return apply_transform(draw_transform(x.size(), aug, rng), x);
}

// ---------------------------------------------------------------------------
// CSV dump/load. Line 1 "d_in,n_classes", line 2 their values, then one row
// per sample: y,x_0,...,x_{d-1}. Floats use %.17g so loads are exact.

inline void save_dataset_csv(const SyntheticData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path);
  out << "d_in,n_classes\n" << data.d_in << ',' << data.n_classes << '\n';
  char buf[32];
  for (const auto& s : data.samples) {
    out << s.y;
    for (double v : s.x) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline SyntheticData load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot read " + path);
  std::string line;
  SyntheticData data;
  if (!std::getline(in, line) || line != "d_in,n_classes") {
    throw Error(ErrorCode::config_invalid, path + ": bad dataset header");
  }
  char comma = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::config_invalid, path + ": truncated");
  std::istringstream hdr(line);
  if (!(hdr >> data.d_in >> comma >> data.n_classes) || comma != ',') {
    throw Error(ErrorCode::config_invalid, path + ": bad dataset shape line");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    LabeledSample s;
    std::string cell;
    std::getline(row, cell, ',');
    s.y = std::stoul(cell);
    while (std::getline(row, cell, ',')) s.x.push_back(std::stod(cell));
    if (s.x.size() != data.d_in || s.y >= data.n_classes) {
      throw Error(ErrorCode::config_invalid, path + ": malformed row");
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

inline std::vector<std::size_t> labels_of(const std::vector<LabeledSample>& samples) {
  std::vector<std::size_t> ys;
  ys.reserve(samples.size());
  for (const auto& s : samples) ys.push_back(s.y);
  return ys;
}

}  // namespace bcl
