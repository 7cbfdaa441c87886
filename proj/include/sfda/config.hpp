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
#pragma once

// Experiment configuration files (JSON).
//
//   {
//     "paths": {"source_manifest": ..., "target_manifest": ...,
//               "auxiliary_manifest": ..., "eval_manifest": ..., "run_dir": ...},
//     "window": {"length": 40, "stride": 30},
//     "graph": {"keep_ratio": 0.3, "ranking": "signed"},
//     "enrichment": {"warp_ratios": [...], "window_sizes": [...],
//                    "slice_ratios": [...]},
//     "model": {"feature_dim": 64},
//     "train": {...},                  // shared training settings
//     "pretrain": {...}, "source": {...}, "adapt": {...},  // per-stage overrides
//     "eval": {"threshold": 0.5, "top_k": 10, "stochastic_views": 0, "seed": 0},
//     "deterministic": true
//   }
//
// Every key is optional. Unknown keys are rejected with a ConfigError naming
// the key. Relative paths resolve against the directory of the config file.

#include <optional>
#include <string>

#include "sfda/pipelines.hpp"
#include "sfda/synthetic.hpp"

namespace sfda {

struct PathConfig {
  fs::path source_manifest;
  fs::path target_manifest;
  fs::path auxiliary_manifest;
  fs::path eval_manifest;
  fs::path run_dir;
};

struct EvalConfig {
  double threshold = 0.5;
  int top_k = 10;
  int stochastic_views = 0;
  std::uint64_t seed = 0;
};

enum class Stage { kPretrain, kSource, kAdapt };

struct ExperimentConfig {
  PathConfig paths;
  ModelContext model;
  TrainConfig pretrain;
  TrainConfig source;
  TrainConfig adapt;
  EvalConfig eval;
  bool deterministic = true;

  const TrainConfig& train(Stage stage) const;
  TrainConfig& train(Stage stage);
  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const fs::path& base_dir = {});
ExperimentConfig load_experiment_config(const fs::path& path);
// Canonical JSON rendering with every field spelled out.
std::string experiment_config_json(const ExperimentConfig& config);

SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const fs::path& path);
std::string synthetic_spec_json(const SyntheticSpec& spec);

}  // namespace sfda
