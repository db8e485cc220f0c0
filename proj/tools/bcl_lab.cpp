// Command-line driver: train, grid, verify, bias, gaps, eval.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcl/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitViolation = 1;
constexpr int kExitUnexpected = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

bcl::ExperimentConfig load(const CommonFlags& f) {
  bcl::ExperimentConfig cfg = f.config.empty() ? bcl::ExperimentConfig{} : bcl::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(std::stod(cell));
  return out;
}

// Checkpoints of a train run, sorted by epoch.
std::vector<std::pair<std::size_t, fs::path>> list_checkpoints(const fs::path& dir) {
  static const std::regex name(R"(ckpt_(\d+)\.txt)");
  std::vector<std::pair<std::size_t, fs::path>> found;
  if (!fs::is_directory(dir)) {
    throw bcl::Error(bcl::ErrorCode::io_failure, "no checkpoint directory " + dir.string());
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (std::regex_match(file, m, name)) found.emplace_back(std::stoul(m[1]), entry.path());
  }
  std::sort(found.begin(), found.end());
  return found;
}

bcl::MlpParams params_for(const bcl::ExperimentConfig& cfg, const std::string& checkpoint) {
  if (checkpoint.empty()) return bcl::init_params(cfg.resolved_encoder());
  return bcl::load_checkpoint(checkpoint).params;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced contrastive learning lab"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "experiment JSON");
    cmd->add_option("--seed", flags.seed, "master seed override");
    cmd->add_option("--out", flags.out, "output directory");
  };

  auto* train = app.add_subcommand("train", "train an encoder, write metrics.csv and checkpoints/");
  add_common(train);

  auto* grid = app.add_subcommand("grid", "train one run per (loss, alpha, lambda) cell");
  add_common(grid);
  std::string alphas = "1,2,4,8", lambdas = "1,2,4,8", losses = "balanced,generalized";
  grid->add_option("--alphas", alphas, "comma-separated alpha values");
  grid->add_option("--lambdas", lambdas, "comma-separated lambda values");
  grid->add_option("--losses", losses, "comma-separated loss selectors");

  auto* verify = app.add_subcommand("verify", "randomized inequality suites");
  add_common(verify);
  std::size_t trials = 10000;
  std::string suite = "all";
  bool corrupt = false;
  verify->add_option("--trials", trials, "trials per suite");
  verify->add_option("--suite", suite, "lse_bounds|lse_convexity|max_product|attract_bound|repel_bound|all");
  verify->add_flag("--corrupt", corrupt, "negative control: flip bound gaps");

  std::string checkpoint;
  auto* bias = app.add_subcommand("bias", "prototype representation bias of an encoder");
  add_common(bias);
  bias->add_option("--checkpoint", checkpoint, "checkpoint file (default: initial encoder)");

  auto* gaps = app.add_subcommand("gaps", "bound gaps over the checkpoints of a train run");
  add_common(gaps);
  std::string ckpt_dir;
  gaps->add_option("--checkpoints", ckpt_dir, "checkpoint directory (default: <out>/checkpoints)");

  auto* eval = app.add_subcommand("eval", "kNN and linear-probe accuracy of an encoder");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default: initial encoder)");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = flags.out;
    if (*train) {
      const auto cfg = load(flags);
      const auto r = bcl::run_train(cfg, {.out_dir = out});
      std::printf("final knn_acc=%s probe_acc=%s\n", bcl::fmt9(r.final_knn_acc).c_str(),
                  bcl::fmt9(r.final_probe_acc).c_str());
    } else if (*grid) {
      const auto cfg = load(flags);
      std::vector<bcl::LossKind> kinds;
      std::stringstream ss(losses);
      for (std::string name; std::getline(ss, name, ',');) kinds.push_back(bcl::parse_loss_kind(name));
      const auto rows = bcl::run_grid(cfg, parse_list(alphas), parse_list(lambdas), kinds, out);
      std::printf("%zu grid rows written to %s\n", rows.size(), (out / "grid.csv").c_str());
    } else if (*verify) {
      const std::uint64_t seed = flags.seed.value_or(1);
      const auto results =
          bcl::run_verify(bcl::parse_suites(suite), trials, seed, {.corrupt_gaps = corrupt}, out);
      std::cout << bcl::verify_csv(results);
      if (!bcl::all_passed(results)) {
        std::fprintf(stderr, "error code=Violation status=%d msg=inequality violated\n",
                     kExitViolation);
        return kExitViolation;
      }
    } else if (*bias) {
      const auto cfg = load(flags);
      const auto data = bcl::make_splits(cfg);
      const auto params = params_for(cfg, checkpoint);
      const auto r = bcl::prototype_bias(bcl::encoder_fn(params), data.train, cfg.augmentation,
                                         cfg.metrics.bias_k_samples, bcl::derive_seed(cfg.seed, "bias"));
      fs::create_directories(out);
      bcl::write_text(out / "bias.csv", "bias_mc,bias_single,k_samples,n_points\n" +
                                            bcl::fmt9(r.bias_mc) + ',' + bcl::fmt9(r.bias_single) +
                                            ',' + std::to_string(r.k_samples) + ',' +
                                            std::to_string(r.n_points) + '\n');
      std::printf("bias_mc=%s bias_single=%s\n", bcl::fmt9(r.bias_mc).c_str(),
                  bcl::fmt9(r.bias_single).c_str());
    } else if (*gaps) {
      const auto cfg = load(flags);
      const auto data = bcl::make_splits(cfg);
      const auto found = list_checkpoints(ckpt_dir.empty() ? out / "checkpoints" : fs::path(ckpt_dir));
      std::vector<bcl::MlpParams> params;
      for (const auto& [epoch, path] : found) params.push_back(bcl::load_checkpoint(path.string()).params);
      const auto curve = bcl::gap_curve(params, data.train, cfg.augmentation, cfg.metrics.k_views,
                                        cfg.loss_params.alpha, bcl::derive_seed(cfg.seed, "gaps"));
      std::string csv = "epoch,gap_attract_mean,gap_repel_mean,attract_precondition_failures\n";
      for (std::size_t i = 0; i < curve.size(); ++i) {
        csv += std::to_string(found[i].first) + ',' + bcl::fmt9(curve[i].attract_mean) + ',' +
               bcl::fmt9(curve[i].repel_mean) + ',' +
               std::to_string(curve[i].attract_precondition_failures) + '\n';
      }
      fs::create_directories(out);
      bcl::write_text(out / "gaps.csv", csv);
      std::cout << csv;
    } else if (*eval) {
      const auto cfg = load(flags);
      const auto data = bcl::make_splits(cfg);
      const auto params = params_for(cfg, checkpoint);
      const auto tr = bcl::represent(params, data.train);
      const auto te = bcl::represent(params, data.test);
      const auto knn = bcl::knn_eval(tr, te, cfg.eval.knn_k);
      const auto lin = bcl::linear_probe(tr, te, cfg.eval.probe_epochs, cfg.eval.probe_lr);
      std::string csv = "protocol,top1_accuracy,n_test,k_or_epochs\n";
      csv += "knn," + bcl::fmt9(knn.top1_accuracy) + ',' + std::to_string(knn.n_test) + ',' +
             std::to_string(knn.k_or_epochs) + '\n';
      csv += "linear," + bcl::fmt9(lin.top1_accuracy) + ',' + std::to_string(lin.n_test) + ',' +
             std::to_string(lin.k_or_epochs) + '\n';
      fs::create_directories(out);
      bcl::write_text(out / "eval.csv", csv);
      std::cout << csv;
    }
  } catch (const bcl::Error& e) {
    const int status = static_cast<int>(e.code());
    std::fprintf(stderr, "error code=%s status=%d msg=%s\n", bcl::error_name(e.code()), status,
                 e.what());
    return status;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error code=Unexpected status=%d msg=%s\n", kExitUnexpected, e.what());
    return kExitUnexpected;
  }
  return 0;
}
