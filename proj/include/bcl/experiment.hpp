#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcl/diagnostics.hpp"
#include "bcl/encoder.hpp"
#include "bcl/error.hpp"
#include "bcl/eval.hpp"
#include "bcl/losses.hpp"
#include "bcl/rng.hpp"
#include "bcl/synthdata.hpp"
#include "bcl/verify.hpp"

namespace bcl {

struct EvalConfig {
  std::size_t knn_k = 5;
  std::size_t probe_epochs = 200;
  double probe_lr = 1.0;
  std::size_t test_per_class = 50;
};

struct MetricsConfig {
  std::size_t log_every = 10;
  bool knn = true;
  bool bias = true;
  bool gaps = true;
  std::size_t k_views = 10;
  std::size_t bias_k_samples = 10;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::optional<std::uint64_t> dataset_seed;  // defaults to one derived from `seed`
  AugmentationSpec augmentation{0.1, 0.2, 0.05};
  EncoderConfig encoder;
  OptimizerConfig optimizer;
  LossKind loss = LossKind::balanced;
  LossParams loss_params{4.0, 2.0};
  std::size_t batch_size = 64;
  EvalConfig eval;
  MetricsConfig metrics;
  std::size_t checkpoint_every = 10;
  std::uint64_t seed = 1;

  /// Dataset spec with its seed resolved.
  DatasetSpec resolved_dataset() const {
    DatasetSpec d = dataset;
    d.seed = dataset_seed ? *dataset_seed : derive_seed(seed, "dataset");
    return d;
  }

  EncoderConfig resolved_encoder() const {
    EncoderConfig e = encoder;
    e.seed = derive_seed(seed, "encoder");
    return e;
  }

  void validate() const {
    dataset.validate();
    augmentation.validate();
    encoder.validate();
    optimizer.validate();
    loss_params.validate();
    if (batch_size < 2) throw Error(ErrorCode::config_invalid, "batch_size must be >= 2");
    if (encoder.layer_dims.front() != dataset.d_in) {
      throw Error(ErrorCode::config_invalid, "encoder input dim must equal dataset d_in");
    }
    if (eval.knn_k < 1 || eval.probe_epochs < 1) {
      throw Error(ErrorCode::config_invalid, "knn_k and probe_epochs must be >= 1");
    }
    if (metrics.log_every < 1 || checkpoint_every < 1) {
      throw Error(ErrorCode::config_invalid, "log_every and checkpoint_every must be >= 1");
    }
  }
};

// ---------------------------------------------------------------------------
// JSON config. Unknown keys are rejected so typos fail loudly.

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const char* where) {
  if (!j.is_object()) throw Error(ErrorCode::config_invalid, std::string(where) + ": not an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::config_invalid, std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig c;
  try {
    detail::check_keys(j, {"dataset", "augmentation", "encoder", "optimizer", "loss", "batch_size",
                           "eval", "metrics", "checkpoint_every", "seed"},
                       "config");
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      detail::check_keys(d, {"n_classes", "d_in", "total_samples", "class_noise_sigma",
                             "distribution", "pareto_shape", "seed", "test_per_class"},
                         "dataset");
      read(d, "n_classes", c.dataset.n_classes);
      read(d, "d_in", c.dataset.d_in);
      read(d, "total_samples", c.dataset.total_samples);
      read(d, "class_noise_sigma", c.dataset.class_noise_sigma);
      read(d, "pareto_shape", c.dataset.pareto_shape);
      read(d, "test_per_class", c.eval.test_per_class);
      if (d.contains("seed")) c.dataset_seed = d.at("seed").get<std::uint64_t>();
      if (d.contains("distribution")) {
        const auto name = d.at("distribution").get<std::string>();
        if (name == "uniform") {
          c.dataset.distribution = ClassDistribution::uniform;
        } else if (name == "pareto") {
          c.dataset.distribution = ClassDistribution::pareto;
        } else {
          throw Error(ErrorCode::config_invalid, "distribution must be uniform or pareto");
        }
      }
    }
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      detail::check_keys(a, {"noise_sigma", "rotation_angle_max", "mask_prob", "enabled"},
                         "augmentation");
      read(a, "noise_sigma", c.augmentation.noise_sigma);
      read(a, "rotation_angle_max", c.augmentation.rotation_angle_max);
      read(a, "mask_prob", c.augmentation.mask_prob);
      if (a.contains("enabled")) {
        c.augmentation.noise_enabled = c.augmentation.rotation_enabled =
            c.augmentation.mask_enabled = false;
        for (const auto& kind : a.at("enabled")) {
          const auto k = kind.get<std::string>();
          if (k == "noise") c.augmentation.noise_enabled = true;
          else if (k == "rotation") c.augmentation.rotation_enabled = true;
          else if (k == "mask") c.augmentation.mask_enabled = true;
          else throw Error(ErrorCode::config_invalid, "unknown augmentation '" + k + "'");
        }
      }
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      detail::check_keys(e, {"layer_dims"}, "encoder");
      read(e, "layer_dims", c.encoder.layer_dims);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      detail::check_keys(o, {"learning_rate", "momentum", "weight_decay", "epochs"}, "optimizer");
      read(o, "learning_rate", c.optimizer.learning_rate);
      read(o, "momentum", c.optimizer.momentum);
      read(o, "weight_decay", c.optimizer.weight_decay);
      read(o, "epochs", c.optimizer.epochs);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      detail::check_keys(l, {"kind", "alpha", "lambda"}, "loss");
      if (l.contains("kind")) c.loss = parse_loss_kind(l.at("kind").get<std::string>());
      read(l, "alpha", c.loss_params.alpha);
      read(l, "lambda", c.loss_params.lambda);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::check_keys(e, {"knn_k", "probe_epochs", "probe_lr"}, "eval");
      read(e, "knn_k", c.eval.knn_k);
      read(e, "probe_epochs", c.eval.probe_epochs);
      read(e, "probe_lr", c.eval.probe_lr);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      detail::check_keys(m, {"log_every", "knn", "bias", "gaps", "k_views", "bias_k_samples"},
                         "metrics");
      read(m, "log_every", c.metrics.log_every);
      read(m, "knn", c.metrics.knn);
      read(m, "bias", c.metrics.bias);
      read(m, "gaps", c.metrics.gaps);
      read(m, "k_views", c.metrics.k_views);
      read(m, "bias_k_samples", c.metrics.bias_k_samples);
    }
    read(j, "batch_size", c.batch_size);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_invalid, e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_invalid, path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// CSV helpers: every float is printed with 9 significant digits.

inline std::string fmt9(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct MetricsRow {
  std::size_t epoch = 0;
  double loss_total = NAN;
  double loss_attract = NAN;
  double loss_repel = NAN;
  double knn_acc = NAN;
  double bias_mc = NAN;
  double bias_single = NAN;
  double gap_attract_mean = NAN;
  double gap_repel_mean = NAN;
  double lr = NAN;
};

inline constexpr const char* kMetricsHeader =
    "epoch,loss_total,loss_attract,loss_repel,knn_acc,bias_mc,bias_single,gap_attract_mean,"
    "gap_repel_mean,lr";

inline std::string to_csv(const MetricsRow& r) {
  return std::to_string(r.epoch) + ',' + fmt9(r.loss_total) + ',' + fmt9(r.loss_attract) + ',' +
         fmt9(r.loss_repel) + ',' + fmt9(r.knn_acc) + ',' + fmt9(r.bias_mc) + ',' +
         fmt9(r.bias_single) + ',' + fmt9(r.gap_attract_mean) + ',' + fmt9(r.gap_repel_mean) +
         ',' + fmt9(r.lr);
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + '\n';
  for (const auto& r : rows) out += to_csv(r) + '\n';
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Training run

struct Splits {
  SyntheticData train;
  SyntheticData test;
};

inline Splits make_splits(const ExperimentConfig& cfg) {
  const DatasetSpec spec = cfg.resolved_dataset();
  Splits s{generate_dataset(spec), {}};
  s.test = generate_test_set(spec, s.train, cfg.eval.test_per_class);
  return s;
}

inline LabeledReps represent(const MlpParams& params, const SyntheticData& data) {
  return {encode_all(params, data.samples), labels_of(data.samples)};
}

inline bool is_balanced(const SyntheticData& data) {
  std::vector<std::size_t> counts(data.n_classes, 0);
  for (const auto& s : data.samples) ++counts[s.y];
  return std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return c == counts[0]; });
}

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<std::pair<std::size_t, MlpParams>> checkpoints;
  MlpParams final_params;
  double final_knn_acc = NAN;
  double final_probe_acc = NAN;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // metrics.csv + checkpoints/
  bool final_probe = true;
  bool keep_checkpoints = false;  // hold checkpoint params in memory too
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
  return dir / "checkpoints" / ("ckpt_" + std::to_string(epoch) + ".txt");
}

/// Minibatch Siamese training with a per-epoch shuffle, cosine-decayed lr,
/// metrics on logging epochs and checkpoints every `checkpoint_every` epochs.
inline TrainResult run_train(const ExperimentConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  const Splits data = make_splits(cfg);
  const EncoderConfig enc_cfg = cfg.resolved_encoder();
  MlpParams params = init_params(enc_cfg);
  const std::size_t epochs = cfg.optimizer.epochs;
  const bool balanced = is_balanced(data.train);

  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir / "checkpoints");

  TrainResult result;
  auto checkpoint = [&](std::size_t epoch) {
    if (opts.out_dir) save_checkpoint(checkpoint_path(*opts.out_dir, epoch).string(),
                                      Checkpoint{enc_cfg, epoch, params});
    if (opts.keep_checkpoints) result.checkpoints.emplace_back(epoch, params);
  };
  checkpoint(0);

  std::vector<std::size_t> order(data.train.samples.size());
  std::vector<const Vec*> batch;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = cosine_lr(cfg.optimizer.learning_rate, epoch - 1, epochs);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    shuffle_rng.shuffle(order);
    Rng aug_rng(derive_seed(cfg.seed, "augment", epoch));

    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr;
    double total = 0.0, attract = 0.0, repel = 0.0;
    std::size_t steps = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        if (end - start < 2) break;
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(&data.train.samples[order[i]].x);
        const auto loss = train_step(params, batch, cfg.augmentation, cfg.loss, cfg.loss_params,
                                     cfg.optimizer, lr, aug_rng);
        if (!std::isfinite(loss.total)) {
          throw Error(ErrorCode::precondition_violated, "non-finite loss");
        }
        total += loss.total;
        attract += loss.attract;
        repel += loss.repel;
        ++steps;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "epoch " + std::to_string(epoch) + ": " + e.what());
    }
    row.loss_total = total / static_cast<double>(steps);
    row.loss_attract = attract / static_cast<double>(steps);
    row.loss_repel = repel / static_cast<double>(steps);

    if (epoch % cfg.metrics.log_every == 0 || epoch == epochs) {
      if (cfg.metrics.knn) {
        row.knn_acc = knn_eval(represent(params, data.train), represent(params, data.test),
                               cfg.eval.knn_k)
                          .top1_accuracy;
      }
      if (cfg.metrics.bias) {
        const auto b = prototype_bias(encoder_fn(params), data.train, cfg.augmentation,
                                      cfg.metrics.bias_k_samples, derive_seed(cfg.seed, "bias"));
        row.bias_mc = b.bias_mc;
        row.bias_single = b.bias_single;
      }
      if (cfg.metrics.gaps && balanced) {
        const auto g = mean_bound_gaps(params, data.train, cfg.augmentation, cfg.metrics.k_views,
                                       cfg.loss_params.alpha, derive_seed(cfg.seed, "gaps"));
        row.gap_attract_mean = g.attract_mean;
        row.gap_repel_mean = g.repel_mean;
      }
      result.rows.push_back(row);
    }
    if (epoch % cfg.checkpoint_every == 0 || epoch == epochs) checkpoint(epoch);
  }

  const auto train_reps = represent(params, data.train);
  const auto test_reps = represent(params, data.test);
  result.final_knn_acc = knn_eval(train_reps, test_reps, cfg.eval.knn_k).top1_accuracy;
  if (opts.final_probe) {
    result.final_probe_acc =
        linear_probe(train_reps, test_reps, cfg.eval.probe_epochs, cfg.eval.probe_lr).top1_accuracy;
  }
  result.final_params = std::move(params);
  if (opts.out_dir) write_text(*opts.out_dir / "metrics.csv", metrics_csv(result.rows));
  return result;
}

// ---------------------------------------------------------------------------
// (alpha, lambda) grid

struct GridRow {
  LossKind loss = LossKind::balanced;
  double alpha = 0.0;
  double lambda = 0.0;
  double knn_acc = NAN;
  double probe_acc = NAN;
};

inline constexpr const char* kGridHeader = "loss,alpha,lambda,knn_acc,probe_acc";

inline std::string grid_csv(const std::vector<GridRow>& rows) {
  std::string out = std::string(kGridHeader) + '\n';
  for (const auto& r : rows) {
    out += std::string(loss_name(r.loss)) + ',' + fmt9(r.alpha) + ',' + fmt9(r.lambda) + ',' +
           fmt9(r.knn_acc) + ',' + fmt9(r.probe_acc) + '\n';
  }
  return out;
}

/// One run_train per (loss, alpha, lambda) cell. Each cell trains from its own
/// seed hash(master, "cell", index); every cell shares the dataset of the
/// master seed so cells differ only in loss settings and training draws.
inline std::vector<GridRow> run_grid(const ExperimentConfig& base, const std::vector<double>& alphas,
                                     const std::vector<double>& lambdas,
                                     const std::vector<LossKind>& losses,
                                     const std::optional<std::filesystem::path>& out_dir = {}) {
  if (alphas.empty() || lambdas.empty() || losses.empty()) {
    throw Error(ErrorCode::config_invalid, "grid parameter lists must be nonempty");
  }
  std::vector<GridRow> rows;
  std::size_t cell = 0;
  for (LossKind loss : losses) {
    for (double alpha : alphas) {
      for (double lambda : lambdas) {
        ExperimentConfig cfg = base;
        cfg.dataset_seed = base.resolved_dataset().seed;
        cfg.seed = derive_seed(base.seed, "cell", cell++);
        cfg.loss = loss;
        cfg.loss_params = {alpha, lambda};
        cfg.metrics.bias = false;
        cfg.metrics.gaps = false;
        cfg.metrics.knn = false;
        const auto r = run_train(cfg);
        rows.push_back({loss, alpha, lambda, r.final_knn_acc, r.final_probe_acc});
      }
    }
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "grid.csv", grid_csv(rows));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Verification suites

inline constexpr const char* kVerifyHeader =
    "suite,trials,violations,max_violation,mean_gap,skipped,core_negative,core_negative_violations";

inline std::string verify_csv(const std::vector<SuiteResult>& results) {
  std::string out = std::string(kVerifyHeader) + '\n';
  for (const auto& r : results) {
    out += std::string(suite_name(r.suite)) + ',' + std::to_string(r.trials) + ',' +
           std::to_string(r.violations) + ',' + fmt9(r.max_violation) + ',' + fmt9(r.mean_gap) +
           ',' + std::to_string(r.skipped) + ',' + std::to_string(r.core_negative) + ',' +
           std::to_string(r.core_negative_violations) + '\n';
  }
  return out;
}

inline std::vector<SuiteResult> run_verify(const std::vector<Suite>& suites, std::size_t trials,
                                           std::uint64_t seed, const SuiteOptions& opt = {},
                                           const std::optional<std::filesystem::path>& out_dir = {}) {
  if (trials < 1) throw Error(ErrorCode::config_invalid, "trials must be >= 1");
  std::vector<SuiteResult> results;
  for (Suite s : suites) results.push_back(run_suite(s, trials, seed, opt));
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "verify.csv", verify_csv(results));
  }
  return results;
}

inline bool all_passed(const std::vector<SuiteResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const SuiteResult& r) { return r.violations == 0; });
}

}  // namespace bcl
