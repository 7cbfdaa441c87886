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
#include "sfda/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "sfda/enrichment.hpp"
#include "sfda/error.hpp"

namespace sfda {
namespace {

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ConfigError("synthetic spec: " + field + " " + rule);
}

std::string subject_name(const char* prefix, int label, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_c%d_%04d", prefix, label, index);
  return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  require(subjects_per_class > 0, "subjects_per_class", "must be positive");
  require(target_subjects_per_class >= 0, "target_subjects_per_class",
          "must be non-negative");
  require(length >= 2, "length", "must be at least 2");
  require(roi_count >= 2, "roi_count", "must be at least 2");
  std::set<int> seen;
  for (int r : planted_block) {
    require(r >= 0 && r < roi_count, "planted_block",
            "indices must lie in [0, roi_count)");
    require(seen.insert(r).second, "planted_block", "has duplicate indices");
  }
  require(std::isfinite(signal_strength) && signal_strength >= 0.0,
          "signal_strength", "must be finite and >= 0");
  require(std::isfinite(noise_sigma) && noise_sigma > 0.0, "noise_sigma",
          "must be finite and > 0");
  require(std::isfinite(shift.resample_ratio) && shift.resample_ratio > 0.0,
          "shift.resample_ratio", "must be finite and > 0");
  require(std::isfinite(shift.noise_multiplier) && shift.noise_multiplier > 0.0,
          "shift.noise_multiplier", "must be finite and > 0");
  require(std::isfinite(shift.amplitude_scale) && shift.amplitude_scale > 0.0,
          "shift.amplitude_scale", "must be finite and > 0");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction",
          "must lie in [0, 1)");
  require(warped_length(length, shift.resample_ratio) >= 2,
          "shift.resample_ratio", "shrinks the series below 2 points");
}

Matrix synthesize_subject(const SyntheticSpec& spec, int label,
                          double noise_sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(spec.length, spec.roi_count);
  Vector latent(spec.length);
  for (int t = 0; t < spec.length; ++t) latent(t) = normal(rng);
  for (int t = 0; t < spec.length; ++t)
    for (int c = 0; c < spec.roi_count; ++c) x(t, c) = noise_sigma * normal(rng);
  if (label == 1)
    for (int c : spec.planted_block) x.col(c) += spec.signal_strength * latent;
  return x;
}

SyntheticCohort synthesize_cohort(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticCohort out;
  const int val_per_class = static_cast<int>(
      std::llround(spec.val_fraction * spec.subjects_per_class));
  for (int label = 0; label <= 1; ++label) {
    for (int i = 0; i < spec.subjects_per_class; ++i) {
      RoiTimeseries s;
      s.subject_id = subject_name("src", label, i);
      s.label = label;
      s.values = synthesize_subject(spec, label, spec.noise_sigma, rng);
      out.source.push_back(std::move(s));
      out.source_splits.push_back(i < val_per_class ? Split::kSourceVal
                                                    : Split::kSourceTrain);
    }
  }
  const int target_per_class = spec.target_subjects_per_class > 0
                                   ? spec.target_subjects_per_class
                                   : spec.subjects_per_class;
  const Eigen::Index target_len =
      warped_length(spec.length, spec.shift.resample_ratio);
  for (int label = 0; label <= 1; ++label) {
    for (int i = 0; i < target_per_class; ++i) {
      Matrix x = synthesize_subject(
          spec, label, spec.noise_sigma * spec.shift.noise_multiplier, rng);
      x *= spec.shift.amplitude_scale;
      RoiTimeseries s;
      s.subject_id = subject_name("tgt", label, i);
      s.label = label;
      if (target_len == x.rows()) {
        s.values = std::move(x);
      } else {
        s.values.resize(target_len, x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c)
          s.values.col(c) = fourier_resample(x.col(c), target_len);
      }
      out.target.push_back(std::move(s));
    }
  }
  return out;
}

SyntheticPaths generate_synthetic_cohort(const SyntheticSpec& spec,
                                         const fs::path& out_dir) {
  const SyntheticCohort cohort = synthesize_cohort(spec);
  std::error_code ec;
  fs::create_directories(out_dir / "source" / "subjects", ec);
  fs::create_directories(out_dir / "target" / "subjects", ec);
  if (ec || !fs::is_directory(out_dir / "target" / "subjects"))
    throw IoError("cannot create output directory " + out_dir.string());

  auto emit = [&](const std::vector<RoiTimeseries>& series,
                  const std::vector<Split>& splits, const fs::path& dir) {
    DatasetManifest m;
    m.roi_count = spec.roi_count;
    for (std::size_t i = 0; i < series.size(); ++i) {
      const fs::path rel = fs::path("subjects") / (series[i].subject_id + ".txt");
      write_matrix_file(dir / rel, series[i].values);
      m.entries.push_back({series[i].subject_id, rel, series[i].label,
                           splits[i]});
    }
    write_manifest(dir / "manifest.tsv", m);
    return dir / "manifest.tsv";
  };
  SyntheticPaths paths;
  paths.source_manifest =
      emit(cohort.source, cohort.source_splits, out_dir / "source");
  paths.target_manifest =
      emit(cohort.target,
           std::vector<Split>(cohort.target.size(), Split::kTarget),
           out_dir / "target");
  return paths;
}

}  // namespace sfda
