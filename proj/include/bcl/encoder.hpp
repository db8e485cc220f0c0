#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bcl/error.hpp"
#include "bcl/geometry.hpp"
#include "bcl/losses.hpp"
#include "bcl/rng.hpp"
#include "bcl/synthdata.hpp"

namespace bcl {

struct EncoderConfig {
  std::vector<std::size_t> layer_dims{32, 64, 64, 16};
  std::uint64_t seed = 1;

  void validate() const {
    if (layer_dims.size() < 2) throw Error(ErrorCode::config_invalid, "need >= 2 layer dims");
    for (std::size_t d : layer_dims) {
      if (d == 0) throw Error(ErrorCode::config_invalid, "layer dims must be positive");
    }
  }
};

struct OptimizerConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 100;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::config_invalid, "learning_rate <= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw Error(ErrorCode::config_invalid, "momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw Error(ErrorCode::config_invalid, "weight_decay < 0");
  }
};

/// Dense layer y = W x + b with W stored row-major (out x in), plus its
/// momentum buffers.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Vec w, b;
  Vec w_momentum, b_momentum;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  /// Flat index over (W_0, b_0, W_1, b_1, ...).
  double& parameter(std::size_t idx) {
    for (auto& l : layers) {
      if (idx < l.w.size()) return l.w[idx];
      idx -= l.w.size();
      if (idx < l.b.size()) return l.b[idx];
      idx -= l.b.size();
    }
    throw std::out_of_range("parameter index");
  }

  bool momentum_is_zero() const {
    for (const auto& l : layers) {
      for (double v : l.w_momentum) if (v != 0.0) return false;
      for (double v : l.b_momentum) if (v != 0.0) return false;
    }
    return true;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& x = a.layers[i];
      const auto& y = b.layers[i];
      if (x.w != y.w || x.b != y.b || x.w_momentum != y.w_momentum ||
          x.b_momentum != y.b_momentum) {
        return false;
      }
    }
    return true;
  }
};

/// He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
inline MlpParams init_params(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "encoder_init"));
  MlpParams p;
  for (std::size_t l = 0; l + 1 < cfg.layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.in = cfg.layer_dims[l];
    layer.out = cfg.layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
    layer.w.resize(layer.in * layer.out);
    for (double& v : layer.w) v = rng.uniform(-bound, bound);
    layer.b.assign(layer.out, 0.0);
    layer.w_momentum.assign(layer.w.size(), 0.0);
    layer.b_momentum.assign(layer.b.size(), 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Activations kept for backprop: inputs to every layer (post-ReLU), the
/// pre-activations, and the raw output with its norm.
struct ForwardCache {
  std::vector<Vec> layer_inputs;
  std::vector<Vec> pre_activations;
  double raw_norm = 0.0;
};

struct ForwardResult {
  UnitRep rep;
  ForwardCache cache;
};

namespace detail {

inline void dense_forward(const DenseLayer& l, std::span<const double> x, std::span<double> y) {
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* row = l.w.data() + o * l.in;
    double s = l.b[o];
    for (std::size_t i = 0; i < l.in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

}  // namespace detail

/// ReLU on every layer but the last, then L2 normalization.
inline ForwardResult encoder_forward(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw Error(ErrorCode::dimension_mismatch, "encoder input has length " +
                                                   std::to_string(x.size()) + ", expected " +
                                                   std::to_string(params.input_dim()));
  }
  ForwardCache cache;
  Vec a(x.begin(), x.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Vec z(layer.out);
    detail::dense_forward(layer, a, z);
    cache.layer_inputs.push_back(std::move(a));
    cache.pre_activations.push_back(z);
    if (l + 1 < params.layers.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(z);
  }
  cache.raw_norm = norm(a);
  UnitRep rep = normalize(a);
  return {std::move(rep), std::move(cache)};
}

inline UnitRep encode(const MlpParams& params, std::span<const double> x) {
  return encoder_forward(params, x).rep;
}

inline std::vector<UnitRep> encode_all(const MlpParams& params,
                                       const std::vector<LabeledSample>& samples) {
  std::vector<UnitRep> reps;
  reps.reserve(samples.size());
  for (const auto& s : samples) reps.push_back(encode(params, s.x));
  return reps;
}

/// Gradient buffers shaped like the parameters.
struct ParamGrads {
  std::vector<Vec> w;
  std::vector<Vec> b;

  static ParamGrads zeros_like(const MlpParams& p) {
    ParamGrads g;
    for (const auto& l : p.layers) {
      g.w.emplace_back(l.w.size(), 0.0);
      g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
  }

  double at(std::size_t idx) const {
    for (std::size_t l = 0; l < w.size(); ++l) {
      if (idx < w[l].size()) return w[l][idx];
      idx -= w[l].size();
      if (idx < b[l].size()) return b[l][idx];
      idx -= b[l].size();
    }
    throw std::out_of_range("gradient index");
  }
};

/// Accumulates dLoss/dParams into `grads` given dLoss/d(unit output).
/// The normalization Jacobian is (I - u u^T) / ||v||.
inline void encoder_backward(const MlpParams& params, const ForwardResult& fwd,
                             std::span<const double> grad_rep, ParamGrads& grads) {
  const auto& u = fwd.rep.values();
  const double ug = dot(u, grad_rep);
  Vec delta(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    delta[i] = (grad_rep[i] - ug * u[i]) / fwd.cache.raw_norm;
  }
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    if (l + 1 < params.layers.size()) {
      const auto& pre = fwd.cache.pre_activations[l];
      for (std::size_t o = 0; o < layer.out; ++o) {
        if (!(pre[o] > 0.0)) delta[o] = 0.0;
      }
    }
    const auto& x = fwd.cache.layer_inputs[l];
    auto& gw = grads.w[l];
    auto& gb = grads.b[l];
    Vec prev(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* grow = gw.data() + o * layer.in;
      const double* wrow = layer.w.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        grow[i] += d * x[i];
        prev[i] += d * wrow[i];
      }
    }
    delta = std::move(prev);
  }
}

struct BatchGradient {
  LossBreakdown loss;
  ParamGrads grads;
};

/// Loss and parameter gradient for already-augmented view pairs.
inline BatchGradient batch_loss_and_grad(const MlpParams& params,
                                         const std::vector<Vec>& views_a,
                                         const std::vector<Vec>& views_b, LossKind kind,
                                         const LossParams& lp) {
  if (views_a.size() != views_b.size()) {
    throw Error(ErrorCode::dimension_mismatch, "view lists differ in length");
  }
  const std::size_t m = views_a.size();
  std::vector<ForwardResult> fwd;
  fwd.reserve(2 * m);
  for (const auto& x : views_a) fwd.push_back(encoder_forward(params, x));
  for (const auto& x : views_b) fwd.push_back(encoder_forward(params, x));

  BatchViews batch;
  for (std::size_t i = 0; i < m; ++i) {
    batch.z.push_back(fwd[i].rep);
    batch.z_prime.push_back(fwd[m + i].rep);
  }
  BatchGradient out{evaluate_loss(batch, kind, lp), ParamGrads::zeros_like(params)};
  const auto grad_reps = detail::total_gradient_stacked(batch.stacked(), kind, lp);
  for (std::size_t k = 0; k < 2 * m; ++k) {
    encoder_backward(params, fwd[k], grad_reps[k], out.grads);
  }
  return out;
}

/// Weight decay (weights only) folded into the gradient, then
/// v <- momentum * v + g; theta <- theta - lr * v.
inline void sgd_momentum_update(MlpParams& params, const ParamGrads& grads,
                                const OptimizerConfig& opt, double lr_now) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    for (std::size_t i = 0; i < layer.w.size(); ++i) {
      const double g = grads.w[l][i] + opt.weight_decay * layer.w[i];
      layer.w_momentum[i] = opt.momentum * layer.w_momentum[i] + g;
      layer.w[i] -= lr_now * layer.w_momentum[i];
    }
    for (std::size_t i = 0; i < layer.b.size(); ++i) {
      layer.b_momentum[i] = opt.momentum * layer.b_momentum[i] + grads.b[l][i];
      layer.b[i] -= lr_now * layer.b_momentum[i];
    }
  }
}

/// One Siamese step: two independent augmentations per input, shared weights.
inline LossBreakdown train_step(MlpParams& params, const std::vector<const Vec*>& inputs,
                                const AugmentationSpec& aug, LossKind kind,
                                const LossParams& lp, const OptimizerConfig& opt,
                                double lr_now, Rng& rng) {
  if (inputs.size() < 2) throw Error(ErrorCode::precondition_violated, "batch needs m >= 2");
  std::vector<Vec> views_a, views_b;
  views_a.reserve(inputs.size());
  views_b.reserve(inputs.size());
  for (const Vec* x : inputs) {
    views_a.push_back(augment(*x, aug, rng));
    views_b.push_back(augment(*x, aug, rng));
  }
  auto result = batch_loss_and_grad(params, views_a, views_b, kind, lp);
  sgd_momentum_update(params, result.grads, opt, lr_now);
  return std::move(result.loss);
}

/// base_lr * (1 + cos(pi * epoch / total)) / 2, no warmup.
inline double cosine_lr(double base_lr, std::size_t epoch, std::size_t total_epochs) {
  if (total_epochs == 0 || epoch > total_epochs) {
    throw Error(ErrorCode::precondition_violated, "cosine_lr needs 0 <= epoch <= total >= 1");
  }
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// ---------------------------------------------------------------------------
// Checkpoints: line-oriented text, every float as %.17g (exact round trip).
//
//   bcl-checkpoint 1
//   dims <d_0> <d_1> ... <d_L>
//   seed <u64>
//   epoch <n>
//   then per layer, four lines: w, b, w_momentum, b_momentum

struct Checkpoint {
  EncoderConfig config;
  std::size_t epoch = 0;
  MlpParams params;
};

namespace detail {

inline void write_row(std::ostream& out, const char* tag, const Vec& v) {
  char buf[32];
  out << tag;
  for (double x : v) {
    std::snprintf(buf, sizeof buf, " %.17g", x);
    out << buf;
  }
  out << '\n';
}

inline Vec read_row(std::istream& in, const std::string& tag, std::size_t n,
                    const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::config_invalid, path + ": truncated");
  std::istringstream row(line);
  std::string got;
  row >> got;
  if (got != tag) throw Error(ErrorCode::config_invalid, path + ": expected '" + tag + "'");
  Vec v;
  v.reserve(n);
  std::string cell;
  while (row >> cell) v.push_back(std::stod(cell));
  if (v.size() != n) throw Error(ErrorCode::config_invalid, path + ": wrong row length");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path);
  out << "bcl-checkpoint 1\ndims";
  for (std::size_t d : ckpt.config.layer_dims) out << ' ' << d;
  out << "\nseed " << ckpt.config.seed << "\nepoch " << ckpt.epoch << '\n';
  for (const auto& l : ckpt.params.layers) {
    detail::write_row(out, "w", l.w);
    detail::write_row(out, "b", l.b);
    detail::write_row(out, "wm", l.w_momentum);
    detail::write_row(out, "bm", l.b_momentum);
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot read " + path);
  std::string line, tag;
  if (!std::getline(in, line) || line != "bcl-checkpoint 1") {
    throw Error(ErrorCode::config_invalid, path + ": not a checkpoint");
  }
  Checkpoint ckpt;
  ckpt.config.layer_dims.clear();
  std::getline(in, line);
  std::istringstream dims(line);
  dims >> tag;
  for (std::size_t d; dims >> d;) ckpt.config.layer_dims.push_back(d);
  if (tag != "dims") throw Error(ErrorCode::config_invalid, path + ": expected dims");
  ckpt.config.validate();
  std::getline(in, line);
  std::istringstream(line) >> tag >> ckpt.config.seed;
  std::getline(in, line);
  std::istringstream(line) >> tag >> ckpt.epoch;
  for (std::size_t l = 0; l + 1 < ckpt.config.layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.in = ckpt.config.layer_dims[l];
    layer.out = ckpt.config.layer_dims[l + 1];
    layer.w = detail::read_row(in, "w", layer.in * layer.out, path);
    layer.b = detail::read_row(in, "b", layer.out, path);
    layer.w_momentum = detail::read_row(in, "wm", layer.in * layer.out, path);
    layer.b_momentum = detail::read_row(in, "bm", layer.out, path);
    ckpt.params.layers.push_back(std::move(layer));
  }
  return ckpt;
}

}  // namespace bcl
