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

#include <optional>
#include <string>
#include <vector>

#include "sfda/pipelines.hpp"

namespace sfda {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  long total() const { return tp + fp + tn + fn; }
};

// Undefined metrics (0/0) are empty optionals and render as "n/a".
struct MetricsRecord {
  std::optional<double> auc;
  std::optional<double> acc;
  std::optional<double> f1;
  std::optional<double> sen;
  std::optional<double> spe;
  std::optional<double> pre;
  double threshold = 0.5;
  long n_pos = 0;
  long n_neg = 0;

  bool operator==(const MetricsRecord&) const = default;
};

// ACC, F1, SEN, SPE and PRE from counts; auc is left unset.
MetricsRecord confusion_metrics(const ConfusionCounts& counts);

// Mann-Whitney estimate: P(pos > neg) + 0.5 P(pos == neg). Throws
// ContractError("undefined AUC ...") when either class is empty.
double auc_rank(const std::vector<double>& scores_pos,
                const std::vector<double>& scores_neg);

struct Prediction {
  std::string subject_id;
  double probability = 0.5;
  std::optional<int> label;
};

// probability >= threshold counts as positive.
MetricsRecord evaluate_cohort(const std::vector<Prediction>& predictions,
                              double threshold = 0.5);

struct RoiScore {
  int roi = 0;  // 0-based column index
  double score = 0;
};

// Top-k entries of `scores`, descending, ties by ascending index.
std::vector<RoiScore> rank_rois(const Vector& scores, int k);

// Mean spatial attention (over branches, then over correctly classified
// positive subjects) ranked top-k. Throws ContractError("empty selection")
// when no positive subject is classified correctly.
std::vector<RoiScore> roi_importance(const MfeState& state,
                                     const std::vector<RoiTimeseries>& cohort,
                                     int k, const ModelContext& ctx,
                                     double threshold = 0.5);

// Structured record: one "key=value" line per field in the fixed order
// auc, acc, f1, sen, spe, pre, n_pos, n_neg, threshold.
std::string format_record(const MetricsRecord& record);
MetricsRecord parse_record(const std::string& text);
std::string format_table(const MetricsRecord& record);
// "rank\troi_index\tscore" lines, rank starting at 1.
std::string format_ranking(const std::vector<RoiScore>& ranking);

struct ReportPaths {
  fs::path record;   // metrics.txt
  fs::path table;    // metrics_table.txt
  fs::path ranking;  // roi_ranking.tsv (only with a ranking)
  fs::path chart;    // roi_scores.dat (only with a ranking)
};

ReportPaths emit_report(const MetricsRecord& record,
                        const std::vector<RoiScore>* ranking,
                        const fs::path& directory);

}  // namespace sfda
