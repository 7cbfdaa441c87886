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
#include "sfda/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "sfda/error.hpp"

namespace sfda {
namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", *v);
  return buf;
}

std::string fmt_pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
  return buf;
}

std::optional<double> parse_opt(const std::string& key, const std::string& v) {
  if (v == "n/a") return std::nullopt;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0')
    throw DataError("metrics record: bad value for " + key + ": '" + v + "'");
  return d;
}

}  // namespace

MetricsRecord confusion_metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0 || c.total() < 1)
    throw ContractError("confusion counts must be non-negative with total >= 1");
  MetricsRecord r;
  r.acc = ratio(c.tp + c.tn, c.total());
  r.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.sen = ratio(c.tp, c.tp + c.fn);
  r.spe = ratio(c.tn, c.tn + c.fp);
  r.pre = ratio(c.tp, c.tp + c.fp);
  r.n_pos = c.tp + c.fn;
  r.n_neg = c.tn + c.fp;
  return r;
}

double auc_rank(const std::vector<double>& scores_pos,
                const std::vector<double>& scores_neg) {
  if (scores_pos.empty() || scores_neg.empty())
    throw ContractError("undefined AUC: a class has no samples");
  std::vector<double> neg = scores_neg;
  std::sort(neg.begin(), neg.end());
  // Twice the Mann-Whitney U statistic, kept integral.
  long long twice_u = 0;
  for (double s : scores_pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
    const auto hi = std::upper_bound(lo, neg.end(), s);
    twice_u += 2 * static_cast<long long>(lo - neg.begin()) +
               static_cast<long long>(hi - lo);
  }
  const long long pairs = static_cast<long long>(scores_pos.size()) *
                          static_cast<long long>(scores_neg.size());
  return static_cast<double>(twice_u) / static_cast<double>(2 * pairs);
}

MetricsRecord evaluate_cohort(const std::vector<Prediction>& predictions,
                              double threshold) {
  ConfusionCounts c;
  std::vector<double> pos, neg;
  for (const auto& p : predictions) {
    if (!p.label)
      throw ContractError("evaluate_cohort: subject " + p.subject_id +
                          " has no label");
    if (*p.label != 0 && *p.label != 1)
      throw ContractError("evaluate_cohort: labels must be binary");
    const bool predicted = p.probability >= threshold;
    if (*p.label == 1) {
      pos.push_back(p.probability);
      (predicted ? c.tp : c.fn)++;
    } else {
      neg.push_back(p.probability);
      (predicted ? c.fp : c.tn)++;
    }
  }
  MetricsRecord r = confusion_metrics(c);
  r.threshold = threshold;
  if (!pos.empty() && !neg.empty()) r.auc = auc_rank(pos, neg);
  return r;
}

std::vector<RoiScore> rank_rois(const Vector& scores, int k) {
  if (k < 1) throw ContractError("top-k needs k >= 1");
  std::vector<int> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(kk), idx.end(),
                    [&scores](int a, int b) {
                      if (scores(a) != scores(b)) return scores(a) > scores(b);
                      return a < b;
                    });
  std::vector<RoiScore> out;
  for (std::size_t i = 0; i < kk; ++i) out.push_back({idx[i], scores(idx[i])});
  return out;
}

std::vector<RoiScore> roi_importance(const MfeState& state,
                                     const std::vector<RoiTimeseries>& cohort,
                                     int k, const ModelContext& ctx,
                                     double threshold) {
  for (const auto& s : cohort)
    if (!s.label)
      throw ContractError("roi_importance: subject " + s.subject_id +
                          " has no label");
  const auto predictions = ensemble_predict_many(cohort, state, ctx);
  Vector total = Vector::Zero(state.branches.front().shape.roi_count);
  int selected = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (*cohort[i].label != 1 || predictions[i].probability < threshold)
      continue;
    Vector subject = Vector::Zero(total.size());
    for (const auto& b : predictions[i].branches) subject += b.attention;
    total += subject / static_cast<double>(predictions[i].branches.size());
    ++selected;
  }
  if (selected == 0)
    throw ContractError(
        "empty selection: no correctly classified positive subjects");
  return rank_rois(total / static_cast<double>(selected), k);
}

std::string format_record(const MetricsRecord& r) {
  std::ostringstream out;
  out << "auc=" << fmt(r.auc) << "\n"
      << "acc=" << fmt(r.acc) << "\n"
      << "f1=" << fmt(r.f1) << "\n"
      << "sen=" << fmt(r.sen) << "\n"
      << "spe=" << fmt(r.spe) << "\n"
      << "pre=" << fmt(r.pre) << "\n"
      << "n_pos=" << r.n_pos << "\n"
      << "n_neg=" << r.n_neg << "\n"
      << "threshold=" << fmt(r.threshold) << "\n";
  return out.str();
}

MetricsRecord parse_record(const std::string& text) {
  MetricsRecord r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("metrics record: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "auc") r.auc = parse_opt(key, value);
    else if (key == "acc") r.acc = parse_opt(key, value);
    else if (key == "f1") r.f1 = parse_opt(key, value);
    else if (key == "sen") r.sen = parse_opt(key, value);
    else if (key == "spe") r.spe = parse_opt(key, value);
    else if (key == "pre") r.pre = parse_opt(key, value);
    else if (key == "n_pos") r.n_pos = std::stol(value);
    else if (key == "n_neg") r.n_neg = std::stol(value);
    else if (key == "threshold") r.threshold = parse_opt(key, value).value_or(0.5);
    else throw DataError("metrics record: unknown key '" + key + "'");
  }
  return r;
}

std::string format_table(const MetricsRecord& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-8s %-8s %-8s %-8s %-8s %-8s\n", "AUC(%)",
                "ACC(%)", "F1(%)", "SEN(%)", "SPE(%)", "PRE(%)");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-8s %-8s %-8s %-8s %-8s %-8s\n",
                fmt_pct(r.auc).c_str(), fmt_pct(r.acc).c_str(),
                fmt_pct(r.f1).c_str(), fmt_pct(r.sen).c_str(),
                fmt_pct(r.spe).c_str(), fmt_pct(r.pre).c_str());
  out += buf;
  std::snprintf(buf, sizeof(buf), "n_pos=%ld n_neg=%ld threshold=%g\n", r.n_pos,
                r.n_neg, r.threshold);
  out += buf;
  return out;
}

std::string format_ranking(const std::vector<RoiScore>& ranking) {
  std::string out;
  char buf[96];
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu\t%d\t%.17g\n", i + 1, ranking[i].roi,
                  ranking[i].score);
    out += buf;
  }
  return out;
}

ReportPaths emit_report(const MetricsRecord& record,
                        const std::vector<RoiScore>* ranking,
                        const fs::path& directory) {
  ReportPaths paths;
  paths.record = directory / "metrics.txt";
  paths.table = directory / "metrics_table.txt";
  write_file_atomic(paths.record, format_record(record));
  write_file_atomic(paths.table, format_table(record));
  if (ranking) {
    paths.ranking = directory / "roi_ranking.tsv";
    paths.chart = directory / "roi_scores.dat";
    write_file_atomic(paths.ranking, format_ranking(*ranking));
    std::string chart = "# roi_index score\n";
    char buf[64];
    for (const auto& r : *ranking) {
      std::snprintf(buf, sizeof(buf), "%d %.6f\n", r.roi, r.score);
      chart += buf;
    }
    write_file_atomic(paths.chart, chart);
  }
  return paths;
}

}  // namespace sfda
