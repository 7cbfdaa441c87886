/* Copyright 2026 The sfda Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "sfda/cli.hpp"

#include <chrono>
#include <sstream>

#include "json.hpp"
#include "sfda/data.hpp"
#include "test_util.hpp"

namespace sfda {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "sfda");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string trim(std::string s) {
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

constexpr const char* kSpec = R"({
  "subjects_per_class": 10, "target_subjects_per_class": 6, "length": 120,
  "roi_count": 10, "signal_strength": 2.0, "seed": 5,
  "shift": {"resample_ratio": 1.1, "noise_multiplier": 1.5}
})";

// Shared cohort and models, built once for the suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const char* root = std::getenv("SFDA_TEST_TMP");
    dir_ = fs::path(root ? root : fs::temp_directory_path().string()) / "Cli.shared";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_file_atomic(dir_ / "spec.json", kSpec);
    ASSERT_EQ(run({"gen-synth", "--spec", (dir_ / "spec.json").string(), "--out",
                   (dir_ / "data").string()})
                  .code,
              0);
    write_file_atomic(dir_ / "exp.json", R"({
      "paths": {"source_manifest": "data/source/manifest.tsv",
                "target_manifest": "data/target/manifest.tsv",
                "auxiliary_manifest": "data/target/manifest.tsv",
                "eval_manifest": "data/target/manifest.tsv"},
      "model": {"feature_dim": 8},
      "train": {"batch_size": 8, "lr0": 0.003, "seed": 2},
      "pretrain": {"epochs": 1}, "source": {"epochs": 12}, "adapt": {"epochs": 2},
      "eval": {"top_k": 4}
    })");
    const auto src = run({"train-source", "--config", config(), "--run-dir",
                          (dir_ / "runs/src").string()});
    ASSERT_EQ(src.code, 0) << src.err;
    source_model_ = trim(src.out);
    const auto adapt = run({"adapt", "--config", config(), "--source", source_model_,
                            "--run-dir", (dir_ / "runs/adapt").string()});
    ASSERT_EQ(adapt.code, 0) << adapt.err;
    adapted_model_ = trim(adapt.out);
    adapt_log_ = adapt.err;
  }

  static std::string config() { return (dir_ / "exp.json").string(); }

  static inline fs::path dir_;
  static inline std::string source_model_;
  static inline std::string adapted_model_;
  static inline std::string adapt_log_;
};

TEST(CliBasics, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"evaluate", "--config", "x.json"}).code, kExitUsage);
}

TEST(CliBasics, GenSynthIsReproducible) {
  const auto dir = testing::scratch_dir();
  write_file_atomic(dir / "spec.json", kSpec);
  for (const char* out : {"a", "b"})
    ASSERT_EQ(run({"gen-synth", "--spec", (dir / "spec.json").string(), "--out",
                   (dir / out).string()})
                  .code,
              0);
  for (const char* rel : {"source/manifest.tsv", "target/manifest.tsv"})
    EXPECT_EQ(read_file(dir / "a" / rel), read_file(dir / "b" / rel));
  const auto m = read_manifest(dir / "a/source/manifest.tsv");
  ASSERT_FALSE(m.entries.empty());
  EXPECT_EQ(m.entries.size(), 20u);
  const auto rel = fs::relative(m.resolve(m.entries[3]), dir / "a");
  EXPECT_EQ(read_file(dir / "a" / rel), read_file(dir / "b" / rel));
}

TEST(CliBasics, MalformedSpecNamesKey) {
  const auto dir = testing::scratch_dir();
  write_file_atomic(dir / "spec.json", R"({"roi_cuont": 10})");
  const auto r = run({"gen-synth", "--spec", (dir / "spec.json").string(), "--out",
                      (dir / "out").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("roi_cuont"), std::string::npos);
}

TEST_F(Cli, TrainingWritesRunDirectory) {
  const fs::path run_dir = dir_ / "runs/src";
  EXPECT_TRUE(fs::exists(run_dir / "config.snapshot"));
  EXPECT_TRUE(fs::exists(run_dir / "model.ckpt"));
  EXPECT_EQ(fs::path(source_model_), run_dir / "model.ckpt");
  EXPECT_EQ(count_lines(read_file(run_dir / "metrics.log")), 12);
  for (int k : {1, 6, 12})
    EXPECT_TRUE(fs::exists(run_dir / "checkpoints" / ("epoch_" + std::to_string(k))));
}

TEST_F(Cli, AdaptationIsSourceFree) {
  EXPECT_NE(adapt_log_.find("target label reads: 0"), std::string::npos);
  const auto r = run({"adapt", "--config", config(), "--source", source_model_,
                      "--source-manifest", (dir_ / "data/source/manifest.tsv").string(),
                      "--run-dir", (dir_ / "runs/forbidden").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("source data forbidden in adaptation"), std::string::npos);
}

TEST_F(Cli, EvaluateReportsEveryMetric) {
  const auto out = dir_ / "eval";
  const auto r = run({"evaluate", "--config", config(), "--checkpoint", adapted_model_,
                      "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* key : {"auc=", "acc=", "f1=", "sen=", "spe=", "pre=", "n_pos=",
                          "n_neg=", "threshold="})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
  EXPECT_EQ(read_file(out / "metrics.txt"), r.out);
  EXPECT_TRUE(fs::exists(out / "metrics_table.txt"));
  EXPECT_EQ(count_lines(read_file(out / "predictions.tsv")), 13);

  const auto again = run({"evaluate", "--config", config(), "--checkpoint",
                          adapted_model_, "--out", (dir_ / "eval2").string()});
  EXPECT_EQ(again.out, r.out);
}

TEST_F(Cli, ExplainRanksTopK) {
  const auto r = run({"explain", "--config", config(), "--checkpoint", source_model_,
                      "--manifest", (dir_ / "data/source/manifest.tsv").string(),
                      "--k", "10", "--out", (dir_ / "explain").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 10);
  EXPECT_EQ(r.out.rfind("1\t", 0), 0u);
  EXPECT_EQ(read_file(dir_ / "explain/roi_ranking.tsv"), r.out);
}

TEST_F(Cli, EvaluateRejectsWrongRoiCount) {
  write_file_atomic(dir_ / "spec7.json", R"({"subjects_per_class": 3, "roi_count": 7,
      "planted_block": [0, 1], "length": 100})");
  ASSERT_EQ(run({"gen-synth", "--spec", (dir_ / "spec7.json").string(), "--out",
                 (dir_ / "data7").string()})
                .code,
            0);
  const auto r = run({"evaluate", "--config", config(), "--checkpoint", source_model_,
                      "--manifest", (dir_ / "data7/target/manifest.tsv").string(),
                      "--out", (dir_ / "eval7").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("checkpoint expected N=10, found N=7"), std::string::npos);
}

TEST_F(Cli, EvaluateRejectsUnlabeledManifest) {
  auto m = read_manifest(dir_ / "data/target/manifest.tsv");
  for (auto& e : m.entries) e.label.reset();
  write_manifest(dir_ / "data/target/unlabeled.tsv", m);
  const auto r = run({"evaluate", "--config", config(), "--checkpoint", source_model_,
                      "--manifest", (dir_ / "data/target/unlabeled.tsv").string(),
                      "--out", (dir_ / "eval_unlabeled").string()});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  const auto stopped = run({"train-source", "--config", config(), "--run-dir",
                            (dir_ / "runs/resume").string(), "--stop-after", "1"});
  ASSERT_EQ(stopped.code, 0) << stopped.err;
  EXPECT_TRUE(stopped.out.empty());
  EXPECT_FALSE(fs::exists(dir_ / "runs/resume/model.ckpt"));
  const auto resumed = run({"train-source", "--config", config(), "--run-dir",
                            (dir_ / "runs/resume").string(), "--resume"});
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_EQ(read_file(trim(resumed.out)), read_file(source_model_));
  EXPECT_EQ(read_file(dir_ / "runs/resume/metrics.log"),
            read_file(dir_ / "runs/src/metrics.log"));
}

TEST_F(Cli, PretrainedInitialization) {
  const auto pre = run({"pretrain", "--config", config(), "--run-dir",
                        (dir_ / "runs/pre").string()});
  ASSERT_EQ(pre.code, 0) << pre.err;
  const auto src = run({"train-source", "--config", config(), "--init", trim(pre.out),
                        "--epochs", "1", "--run-dir", (dir_ / "runs/src_init").string()});
  EXPECT_EQ(src.code, 0) << src.err;
  EXPECT_NE(src.err.find("initialized from"), std::string::npos);
}

TEST(CliPreset, FullChainWithinBudget) {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = testing::scratch_dir();
  const fs::path configs = SFDA_CONFIG_DIR;
  const auto gen = run({"gen-synth", "--spec", (configs / "ci_synth.json").string(),
                        "--out", (dir / "data").string()});
  ASSERT_EQ(gen.code, 0) << gen.err;

  // The shipped config with its data paths pointed at the scratch cohort.
  auto config = nlohmann::json::parse(read_file(configs / "ci.json"));
  for (const char* key : {"target_manifest", "auxiliary_manifest", "eval_manifest"})
    config["paths"][key] = (dir / "data/target/manifest.tsv").string();
  config["paths"]["source_manifest"] = (dir / "data/source/manifest.tsv").string();
  write_file_atomic(dir / "ci.json", config.dump());
  const std::string cfg = (dir / "ci.json").string();

  const auto src = run({"train-source", "--config", cfg, "--run-dir", (dir / "src").string()});
  ASSERT_EQ(src.code, 0) << src.err;
  const auto adapt = run({"adapt", "--config", cfg, "--source", trim(src.out), "--run-dir",
                          (dir / "adapt").string()});
  ASSERT_EQ(adapt.code, 0) << adapt.err;
  const auto eval = run({"evaluate", "--config", cfg, "--checkpoint", trim(adapt.out),
                         "--out", (dir / "eval").string()});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_NE(eval.out.find("n_pos=60"), std::string::npos);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 600.0);
}

}  // namespace
}  // namespace sfda
