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

// Synthetic two-domain cohorts with a planted connectivity block.
//
// Class-1 subjects share a latent signal across the planted ROIs, which
// raises their within-block correlation; class-0 subjects are pure noise.
// Target-domain subjects are additionally re-noised, rescaled and
// Fourier-resampled to a different temporal resolution.

#include <cstdint>
#include <random>
#include <vector>

#include "sfda/data.hpp"

namespace sfda {

struct DomainShift {
  double resample_ratio = 1.0;
  double noise_multiplier = 1.0;
  double amplitude_scale = 1.0;
};

struct SyntheticSpec {
  int subjects_per_class = 50;
  // Target cohort size per class; 0 means "same as subjects_per_class".
  int target_subjects_per_class = 0;
  int length = 200;
  int roi_count = 10;
  std::vector<int> planted_block{0, 1, 2, 3};  // 0-based ROI indices
  double signal_strength = 1.0;
  double noise_sigma = 1.0;
  DomainShift shift;
  // Fraction of each source class tagged source-val.
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct SyntheticCohort {
  std::vector<RoiTimeseries> source;  // raw values, labeled
  std::vector<Split> source_splits;   // source-train / source-val
  std::vector<RoiTimeseries> target;  // shifted, labeled (for evaluation)
};

SyntheticCohort synthesize_cohort(const SyntheticSpec& spec);

// One subject drawn from the generative model (no domain shift).
Matrix synthesize_subject(const SyntheticSpec& spec, int label,
                          double noise_sigma, std::mt19937_64& rng);

struct SyntheticPaths {
  fs::path source_manifest;
  fs::path target_manifest;
};

// Writes <out>/source/manifest.tsv and <out>/target/manifest.tsv with one
// matrix file per subject. Output is byte-identical for identical specs.
SyntheticPaths generate_synthetic_cohort(const SyntheticSpec& spec,
                                         const fs::path& out_dir);

}  // namespace sfda
