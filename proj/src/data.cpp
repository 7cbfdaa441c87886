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
#include "sfda/data.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "sfda/error.hpp"

namespace sfda {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& text, const std::string& what) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0' || errno != 0)
    throw DataError("cannot parse " + what + " from '" + text + "'");
  return static_cast<int>(v);
}

}  // namespace

void normalize_columns(RoiTimeseries& series) {
  Matrix& x = series.values;
  series.constant_columns.clear();
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.col(c);
    if (col.maxCoeff() == col.minCoeff()) {
      col.setZero();
      series.constant_columns.push_back(static_cast<int>(c));
      continue;
    }
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (sd == 0.0) {
      col.setZero();
      series.constant_columns.push_back(static_cast<int>(c));
      continue;
    }
    col /= sd;
  }
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kSourceTrain: return "source-train";
    case Split::kSourceVal: return "source-val";
    case Split::kTarget: return "target";
    case Split::kAuxiliary: return "auxiliary";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "source-train") return Split::kSourceTrain;
  if (text == "source-val") return Split::kSourceVal;
  if (text == "target") return Split::kTarget;
  if (text == "auxiliary") return Split::kAuxiliary;
  throw DataError("unknown split tag '" + text + "'");
}

fs::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  return entry.path.is_absolute() ? entry.path : base_dir / entry.path;
}

DatasetManifest DatasetManifest::with_splits(
    std::initializer_list<Split> splits) const {
  DatasetManifest out = *this;
  out.entries.clear();
  for (const auto& e : entries)
    for (Split s : splits)
      if (e.split == s) out.entries.push_back(e);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::istringstream in(read_file(path));
  DatasetManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  m.schema_version = 0;
  std::string line;
  int line_no = 0;
  bool roi_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("#dataset_manifest", 0) != 0)
        throw DataError(path.string() + ": missing '#dataset_manifest' header",
                        line_no);
      continue;
    }
    if (trim(line).empty() || line[0] == '#') continue;
    if (line.find('\t') == std::string::npos) {
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw DataError(path.string() + ": malformed line " +
                            std::to_string(line_no),
                        line_no);
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "schema_version") {
        m.schema_version = parse_int(value, key);
      } else if (key == "roi_count") {
        m.roi_count = parse_int(value, key);
        roi_seen = true;
      } else {
        throw DataError(path.string() + ": unknown header key '" + key + "'",
                        line_no);
      }
      continue;
    }
    const auto fields = split_tabs(line);
    if (fields.size() != 4)
      throw DataError(path.string() + ": record on line " +
                          std::to_string(line_no) + " needs 4 fields",
                      line_no);
    ManifestEntry e;
    e.subject_id = fields[0];
    e.path = fields[1];
    if (fields[2] != "-") {
      const int label = parse_int(fields[2], "label");
      if (label != 0 && label != 1)
        throw DataError(path.string() + ": label must be 0, 1 or '-'", line_no);
      e.label = label;
    }
    e.split = parse_split(fields[3]);
    m.entries.push_back(std::move(e));
  }
  if (!roi_seen) throw DataError(path.string() + ": missing roi_count");
  if (m.schema_version != DatasetManifest::kSchemaVersion)
    throw SchemaError(path.string() + ": unsupported schema_version " +
                      std::to_string(m.schema_version));
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ostringstream out;
  out << "#dataset_manifest v1\n";
  out << "schema_version=" << manifest.schema_version << "\n";
  out << "roi_count=" << manifest.roi_count << "\n";
  out << "# subject_id\tpath\tlabel\tsplit\n";
  for (const auto& e : manifest.entries) {
    out << e.subject_id << '\t' << e.path.generic_string() << '\t'
        << (e.label ? std::to_string(*e.label) : std::string("-")) << '\t'
        << split_name(e.split) << '\n';
  }
  write_file_atomic(path, out.str());
}

Matrix read_matrix_file(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  long rows = -1, cols = -1;
  if (std::sscanf(header.c_str(), "#roi_timeseries v1 L=%ld N=%ld", &rows,
                  &cols) != 2 ||
      rows < 1 || cols < 1)
    throw DataError(path.string() + ": missing or malformed header", 0);
  Matrix m(rows, cols);
  std::string line;
  for (long r = 0; r < rows; ++r) {
    if (!std::getline(in, line))
      throw DataError(path.string() + ": expected " + std::to_string(rows) +
                          " rows, found " + std::to_string(r),
                      r);
    const auto fields = split_tabs(line);
    if (static_cast<long>(fields.size()) != cols)
      throw DataError(path.string() + ": row " + std::to_string(r) + " has " +
                          std::to_string(fields.size()) + " columns, expected " +
                          std::to_string(cols),
                      r);
    for (long c = 0; c < cols; ++c) {
      const std::string& f = fields[c];
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0')
        throw DataError(path.string() + ": unparsable value at (" +
                            std::to_string(r) + ", " + std::to_string(c) + ")",
                        r, c);
      if (!std::isfinite(v))
        throw DataError(path.string() + ": non-finite value at (" +
                            std::to_string(r) + ", " + std::to_string(c) + ")",
                        r, c);
      m(r, c) = v;
    }
  }
  return m;
}

void write_matrix_file(const fs::path& path, const Matrix& values) {
  std::string out = "#roi_timeseries v1 L=" + std::to_string(values.rows()) +
                    " N=" + std::to_string(values.cols()) + "\n";
  char buf[32];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", values(r, c));
      if (c) out.push_back('\t');
      out += buf;
    }
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

bool ValidationReport::mentions(const std::string& needle) const {
  for (const auto& i : issues)
    if (i.message.find(needle) != std::string::npos) return true;
  return false;
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  out << (ok() ? "ok" : "invalid") << " (" << entries_checked << " entries)\n";
  for (const auto& i : issues)
    out << "  " << (i.subject_id.empty() ? "<cohort>" : i.subject_id) << ": "
        << i.message << "\n";
  return out.str();
}

ValidationReport validate_manifest(const DatasetManifest& manifest) {
  ValidationReport report;
  report.entries_checked = manifest.entries.size();
  if (manifest.entries.empty()) report.issues.push_back({"", "empty cohort"});
  if (manifest.roi_count < 2)
    report.issues.push_back({"", "roi_count must be at least 2"});
  if (manifest.schema_version != DatasetManifest::kSchemaVersion)
    report.issues.push_back({"", "unsupported schema_version"});
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (e.subject_id.empty()) report.issues.push_back({"", "empty subject_id"});
    if (!seen.insert(e.subject_id).second)
      report.issues.push_back({e.subject_id, "duplicate subject_id"});
    const bool source =
        e.split == Split::kSourceTrain || e.split == Split::kSourceVal;
    if (source && !e.label)
      report.issues.push_back({e.subject_id, "label required"});
    std::error_code ec;
    if (!fs::is_regular_file(manifest.resolve(e), ec))
      report.issues.push_back(
          {e.subject_id, "file not found: " + manifest.resolve(e).string()});
  }
  return report;
}

std::vector<RoiTimeseries> load_cohort(const DatasetManifest& manifest,
                                       const LoadOptions& options) {
  std::vector<RoiTimeseries> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const fs::path p = manifest.resolve(e);
    std::error_code ec;
    if (!fs::is_regular_file(p, ec))
      throw IoError("subject " + e.subject_id + ": missing file " + p.string());
    RoiTimeseries s;
    s.subject_id = e.subject_id;
    s.label = e.label;
    try {
      s.values = read_matrix_file(p);
    } catch (const DataError& err) {
      throw DataError("subject " + e.subject_id + ": " + err.what(), err.row(),
                      err.col());
    }
    if (s.values.cols() != manifest.roi_count)
      throw SchemaError("subject " + e.subject_id + ": expected N=" +
                        std::to_string(manifest.roi_count) + ", found N=" +
                        std::to_string(s.values.cols()));
    if (s.values.rows() < 2)
      throw DataError("subject " + e.subject_id + ": needs at least 2 rows");
    if (options.min_length > 0 && s.values.rows() < options.min_length) continue;
    normalize_columns(s);
    out.push_back(std::move(s));
  }
  return out;
}

UnlabeledCohort::UnlabeledCohort(std::vector<RoiTimeseries> series,
                                 std::shared_ptr<AccessLog> log)
    : series_(std::move(series)),
      log_(log ? std::move(log) : std::make_shared<AccessLog>()) {
  withheld_.reserve(series_.size());
  for (auto& s : series_) {
    withheld_.push_back(s.label);
    s.label.reset();
  }
}

std::optional<int> UnlabeledCohort::label(std::size_t i) const {
  log_->record("label read: " + series_.at(i).subject_id);
  return withheld_.at(i);
}

}  // namespace sfda
