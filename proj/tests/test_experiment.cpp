#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "bcl/experiment.hpp"

using namespace bcl;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_json() {
  return nlohmann::json::parse(R"({
    "dataset": {"n_classes": 4, "d_in": 8, "total_samples": 48, "test_per_class": 5},
    "encoder": {"layer_dims": [8, 12, 4]},
    "optimizer": {"epochs": 3},
    "batch_size": 8,
    "eval": {"knn_k": 3, "probe_epochs": 20},
    "metrics": {"log_every": 1, "k_views": 2, "bias_k_samples": 2},
    "checkpoint_every": 2,
    "seed": 5
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("bcl_exp_" + name);
  fs::remove_all(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BCL_LAB_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsMatchDeskSetup) {
  const ExperimentConfig c = parse_config(nlohmann::json::object());
  EXPECT_EQ(c.dataset.n_classes, 8u);
  EXPECT_EQ(c.dataset.d_in, 32u);
  EXPECT_EQ(c.dataset.total_samples, 2000u);
  EXPECT_EQ(c.encoder.layer_dims.back(), 16u);
  EXPECT_EQ(c.loss, LossKind::balanced);
  EXPECT_EQ(c.loss_params.alpha, 4.0);
  EXPECT_EQ(c.loss_params.lambda, 2.0);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  auto expect_invalid = [](const char* text) {
    try {
      parse_config(nlohmann::json::parse(text)).validate();
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::config_invalid) << text;
    }
  };
  expect_invalid(R"({"optimiser": {}})");
  expect_invalid(R"({"loss": {"kind": "balanced", "temperature": 0.5}})");
  expect_invalid(R"({"batch_size": 1})");
  expect_invalid(R"({"encoder": {"layer_dims": [16, 8]}})");
  expect_invalid(R"({"dataset": {"distribution": "zipf"}})");
  expect_invalid(R"({"seed": "one"})");
}

TEST(Train, ZeroEpochsGivesHeaderOnlyCsvAndInitialCheckpoint) {
  auto j = tiny_json();
  j["optimizer"]["epochs"] = 0;
  const auto dir = fresh_dir("zero");
  run_train(parse_config(j), TrainOptions{dir});
  EXPECT_EQ(slurp(dir / "metrics.csv"), std::string(kMetricsHeader) + "\n");
  EXPECT_TRUE(fs::exists(checkpoint_path(dir, 0)));
  fs::remove_all(dir);
}

TEST(Train, SameSeedIsByteIdentical) {
  const auto cfg = parse_config(tiny_json());
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  run_train(cfg, TrainOptions{a});
  run_train(cfg, TrainOptions{b});
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(checkpoint_path(a, 3)), slurp(checkpoint_path(b, 3)));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, RowsCheckpointsAndReload) {
  const auto cfg = parse_config(tiny_json());
  const auto dir = fresh_dir("rows");
  TrainOptions opts{dir};
  opts.keep_checkpoints = true;
  const auto r = run_train(cfg, opts);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows.back().epoch, 3u);
  for (const auto& row : r.rows) {
    EXPECT_TRUE(std::isfinite(row.loss_total));
    EXPECT_GE(row.bias_mc, 0.0);
    EXPECT_TRUE(std::isfinite(row.gap_repel_mean));
  }
  // Checkpoints at 0, 2 and the final epoch.
  ASSERT_EQ(r.checkpoints.size(), 3u);
  EXPECT_TRUE(fs::exists(checkpoint_path(dir, 2)));
  EXPECT_TRUE(load_checkpoint(checkpoint_path(dir, 3).string()).params == r.final_params);
  EXPECT_GE(r.final_knn_acc, 0.0);
  EXPECT_LE(r.final_probe_acc, 1.0);
  fs::remove_all(dir);
}

TEST(Train, DifferentSeedsDiffer) {
  auto j = tiny_json();
  const auto a = run_train(parse_config(j));
  j["seed"] = 6;
  const auto b = run_train(parse_config(j));
  EXPECT_FALSE(a.final_params == b.final_params);
}

TEST(Grid, SingleCellEqualsTrainRun) {
  const auto base = parse_config(tiny_json());
  const auto rows = run_grid(base, {2.0}, {3.0}, {LossKind::generalized});
  ASSERT_EQ(rows.size(), 1u);
  ExperimentConfig cfg = base;
  cfg.dataset_seed = base.resolved_dataset().seed;
  cfg.seed = derive_seed(base.seed, "cell", 0);
  cfg.loss = LossKind::generalized;
  cfg.loss_params = {2.0, 3.0};
  const auto r = run_train(cfg);
  EXPECT_EQ(rows[0].knn_acc, r.final_knn_acc);
  EXPECT_EQ(rows[0].probe_acc, r.final_probe_acc);
}

TEST(Grid, RowCountAndDeterminism) {
  auto j = tiny_json();
  j["optimizer"]["epochs"] = 1;
  const auto cfg = parse_config(j);
  const auto a = fresh_dir("grid_a"), b = fresh_dir("grid_b");
  const auto rows = run_grid(cfg, {1, 2}, {1, 2}, {LossKind::balanced, LossKind::generalized}, a);
  run_grid(cfg, {1, 2}, {1, 2}, {LossKind::balanced, LossKind::generalized}, b);
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_EQ(slurp(a / "grid.csv"), slurp(b / "grid.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Verify, SmokeRunIsFastAndWritesCsv) {
  const auto dir = fresh_dir("verify");
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_verify(parse_suites("all"), 1, 1, {}, dir);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
  EXPECT_EQ(res.size(), 5u);
  const auto text = slurp(dir / "verify.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), kVerifyHeader);
  fs::remove_all(dir);
}

TEST(Cli, VerifyExitCodes) {
  const auto dir = fresh_dir("cli");
  EXPECT_EQ(run_cli("verify --trials 200 --suite lse_bounds --out " + dir.string()), 0);
  EXPECT_EQ(run_cli("verify --trials 200 --suite attract_bound --corrupt --out " + dir.string()), 1);
  fs::remove_all(dir);
}

TEST(Cli, ErrorsCarryTheirCode) {
  const auto dir = fresh_dir("cli_err");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "bad.json") << R"({"nonsense": 1})";
  }
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string()),
            static_cast<int>(ErrorCode::config_invalid));
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string()),
            static_cast<int>(ErrorCode::io_failure));
  EXPECT_NE(run_cli("frobnicate"), 0);
  fs::remove_all(dir);
}

TEST(Cli, TrainWritesArtifacts) {
  const auto dir = fresh_dir("cli_train");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "tiny.json") << tiny_json().dump();
  }
  EXPECT_EQ(run_cli("train --config " + (dir / "tiny.json").string() + " --out " +
                    (dir / "run").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoints" / "ckpt_3.txt"));
  EXPECT_EQ(run_cli("gaps --config " + (dir / "tiny.json").string() + " --checkpoints " +
                    (dir / "run" / "checkpoints").string() + " --out " + (dir / "gaps").string()),
            0);
  fs::remove_all(dir);
}
