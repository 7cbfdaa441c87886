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
#include "sfda/config.hpp"

#include "sfda/error.hpp"
#include "test_util.hpp"

namespace sfda {
namespace {

std::string error_of(const std::string& json) {
  try {
    parse_experiment_config(json);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Experiment, EmptyObjectGivesDefaults) {
  const auto c = parse_experiment_config("{}");
  EXPECT_EQ(c.model.graph.window.length, 40);
  EXPECT_EQ(c.model.graph.window.stride, 30);
  EXPECT_DOUBLE_EQ(c.model.graph.keep_ratio, 0.3);
  EXPECT_EQ(c.model.feature_dim, 64);
  EXPECT_EQ(c.source.batch_size, 64);
  EXPECT_DOUBLE_EQ(c.adapt.lr0, 3e-4);
  EXPECT_EQ(c.pretrain.epochs, 150);
  EXPECT_EQ(c.adapt.branch_kinds.size(), 3u);
  EXPECT_DOUBLE_EQ(c.eval.threshold, 0.5);
  EXPECT_EQ(c.eval.top_k, 10);
  EXPECT_TRUE(c.deterministic);
}

TEST(Experiment, StageOverridesMergeOverShared) {
  const auto c = parse_experiment_config(R"({
    "train": {"batch_size": 16, "lr0": 0.002, "epochs": 7},
    "adapt": {"epochs": 3, "freeze_norm_stats": true},
    "source": {"branch_kinds": ["none"]}
  })");
  EXPECT_EQ(c.adapt.epochs, 3);
  EXPECT_TRUE(c.adapt.freeze_norm_stats);
  EXPECT_EQ(c.adapt.batch_size, 16);
  EXPECT_EQ(c.source.epochs, 7);
  EXPECT_FALSE(c.source.freeze_norm_stats);
  EXPECT_EQ(c.train(Stage::kPretrain).lr0, 0.002);
  ASSERT_EQ(c.source.branch_kinds.size(), 1u);
  EXPECT_EQ(c.source.branch_kinds[0], EnrichmentKind::kNone);
}

TEST(Experiment, UnknownKeysAreNamed) {
  EXPECT_NE(error_of(R"({"trian": {}})").find("'trian'"), std::string::npos);
  EXPECT_NE(error_of(R"({"train": {"lr": 1}})").find("'train.lr'"), std::string::npos);
  EXPECT_NE(error_of(R"({"adapt": {"epoch": 1}})").find("epoch"), std::string::npos);
  EXPECT_NE(error_of(R"({"window": {"length": "x"}})").find("window.length"),
            std::string::npos);
  EXPECT_FALSE(error_of("{not json").empty());
}

TEST(Experiment, RangeValidation) {
  EXPECT_FALSE(error_of(R"({"graph": {"keep_ratio": 1.5}})").empty());
  EXPECT_FALSE(error_of(R"({"graph": {"ranking": "cosine"}})").empty());
  EXPECT_FALSE(error_of(R"({"train": {"pairs": "both"}})").empty());
  EXPECT_FALSE(error_of(R"({"model": {"feature_dim": 7}})").empty());
  EXPECT_FALSE(error_of(R"({"window": {"length": 40, "stride": 0}})").empty());
  EXPECT_TRUE(error_of(R"({"graph": {"ranking": "absolute"}})").empty());
}

TEST(Experiment, RelativePathsResolveAgainstConfigDir) {
  const auto dir = testing::scratch_dir();
  write_file_atomic(dir / "exp.json", R"({"paths": {"source_manifest": "d/m.tsv",
                                          "run_dir": "/abs/run"}})");
  const auto c = load_experiment_config(dir / "exp.json");
  EXPECT_EQ(c.paths.source_manifest, dir / "d/m.tsv");
  EXPECT_EQ(c.paths.run_dir, fs::path("/abs/run"));
  EXPECT_TRUE(c.paths.target_manifest.empty());
}

TEST(Experiment, CanonicalJsonRoundTrips) {
  const auto c = parse_experiment_config(R"({"adapt": {"epochs": 4}, "eval": {"top_k": 3}})");
  const std::string text = experiment_config_json(c);
  const auto back = parse_experiment_config(text);
  EXPECT_EQ(experiment_config_json(back), text);
  EXPECT_EQ(back.adapt.epochs, 4);
  EXPECT_EQ(back.eval.top_k, 3);
}

TEST(Synthetic, ParsesAndRoundTrips) {
  const auto s = parse_synthetic_spec(R"({"subjects_per_class": 12, "roi_count": 8,
      "planted_block": [1, 2], "shift": {"resample_ratio": 1.2}, "seed": 9})");
  EXPECT_EQ(s.subjects_per_class, 12);
  EXPECT_EQ(s.planted_block, (std::vector<int>{1, 2}));
  EXPECT_DOUBLE_EQ(s.shift.resample_ratio, 1.2);
  EXPECT_EQ(s.seed, 9u);
  const auto back = parse_synthetic_spec(synthetic_spec_json(s));
  EXPECT_EQ(synthetic_spec_json(back), synthetic_spec_json(s));
}

TEST(Synthetic, ErrorsNameTheKey) {
  try {
    parse_synthetic_spec(R"({"subjects": 3})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("subjects"), std::string::npos);
  }
  try {
    parse_synthetic_spec(R"({"noise_sigma": -1})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("noise_sigma"), std::string::npos);
  }
}

TEST(Presets, ShippedFilesLoad) {
  const fs::path dir = SFDA_CONFIG_DIR;
  EXPECT_NO_THROW(load_experiment_config(dir / "ci.json"));
  const auto s = load_synthetic_spec(dir / "ci_synth.json");
  EXPECT_EQ(s.roi_count, 10);
  EXPECT_EQ(s.length, 200);
  EXPECT_EQ(s.subjects_per_class, 100);
  EXPECT_EQ(s.target_subjects_per_class, 60);
}

}  // namespace
}  // namespace sfda
