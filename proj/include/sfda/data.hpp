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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfda/autodiff.hpp"

namespace sfda {

namespace fs = std::filesystem;

// One subject: L time points (rows) by N ROIs (columns).
struct RoiTimeseries {
  std::string subject_id;
  Matrix values;
  std::optional<int> label;  // 1 = patient, 0 = control
  // Columns that were constant before normalization (now all zero).
  std::vector<int> constant_columns;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index roi_count() const { return values.cols(); }
  bool flagged() const { return !constant_columns.empty(); }
};

// Z-scores every column in place (population variance). Constant columns
// are set to zero and recorded in constant_columns.
void normalize_columns(RoiTimeseries& series);

enum class Split { kSourceTrain, kSourceVal, kTarget, kAuxiliary };

const char* split_name(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string subject_id;
  fs::path path;  // relative to DatasetManifest::base_dir unless absolute
  std::optional<int> label;
  Split split = Split::kSourceTrain;
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  std::vector<ManifestEntry> entries;
  int roi_count = 0;
  int schema_version = kSchemaVersion;
  fs::path base_dir;  // directory the manifest was read from

  fs::path resolve(const ManifestEntry& entry) const;
  DatasetManifest with_splits(std::initializer_list<Split> splits) const;
};

// Manifest text format:
//
//   #dataset_manifest v1
//   schema_version=1
//   roi_count=<N>
//   <subject_id>\t<path>\t<label|->\t<split>
//
// Lines starting with '#' after the first are comments.
DatasetManifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const DatasetManifest& manifest);

// Matrix file format: header "#roi_timeseries v1 L=<L> N=<N>", then one
// tab-delimited row per time point. Values are written with 17 significant
// digits so a write/read cycle is exact.
Matrix read_matrix_file(const fs::path& path);
void write_matrix_file(const fs::path& path, const Matrix& values);

struct ValidationIssue {
  std::string subject_id;  // empty for cohort-level issues
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  std::size_t entries_checked = 0;

  bool ok() const { return issues.empty(); }
  bool mentions(const std::string& needle) const;
  std::string to_string() const;
};

ValidationReport validate_manifest(const DatasetManifest& manifest);

struct LoadOptions {
  // Entries whose series is shorter than this are skipped (0 = keep all).
  Eigen::Index min_length = 0;
};

// Loads and normalizes every entry in manifest order. Throws IoError for
// missing files, DataError for non-finite values, SchemaError when a file's
// ROI count differs from the manifest.
std::vector<RoiTimeseries> load_cohort(const DatasetManifest& manifest,
                                       const LoadOptions& options = {});

// Records label reads on an unlabeled cohort.
class AccessLog {
 public:
  void record(std::string event) { events_.push_back(std::move(event)); }
  const std::vector<std::string>& events() const { return events_; }
  bool empty() const { return events_.empty(); }

 private:
  std::vector<std::string> events_;
};

// A cohort whose labels are withheld. Series are exposed without labels;
// any label read goes through label(), which writes to the access log.
class UnlabeledCohort {
 public:
  UnlabeledCohort(std::vector<RoiTimeseries> series,
                  std::shared_ptr<AccessLog> log = nullptr);

  std::size_t size() const { return series_.size(); }
  bool empty() const { return series_.empty(); }
  const RoiTimeseries& series(std::size_t i) const { return series_.at(i); }
  const std::vector<RoiTimeseries>& all() const { return series_; }
  std::optional<int> label(std::size_t i) const;
  const AccessLog& log() const { return *log_; }

 private:
  std::vector<RoiTimeseries> series_;
  std::vector<std::optional<int>> withheld_;
  std::shared_ptr<AccessLog> log_;
};

// Writes `bytes` to `path` through a temporary sibling and a rename.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

}  // namespace sfda
