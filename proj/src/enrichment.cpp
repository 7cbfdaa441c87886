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
#include "sfda/enrichment.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "sfda/error.hpp"

namespace sfda {
namespace {

using Complex = std::complex<double>;

bool in_set(double v, const std::vector<double>& set) {
  for (double s : set)
    if (std::abs(s - v) <= 1e-12 * std::max(1.0, std::abs(s))) return true;
  return false;
}

std::vector<WindowGraph> graphs_from(const Matrix& values,
                                     const WindowConfig& window,
                                     const GraphConfig& cfg) {
  if (values.rows() < window.length)
    throw SeriesTooShortError(
        "series too short after enrichment: L=" +
            std::to_string(values.rows()) +
            " < l=" + std::to_string(window.length),
        values.rows(), window.length);
  std::vector<WindowGraph> out;
  const auto windows = partition_windows(values, window);
  out.reserve(windows.size());
  for (std::size_t t = 0; t < windows.size(); ++t) {
    WindowGraph g;
    g.adjacency =
        threshold_adjacency(pearson_matrix(windows[t]), cfg.keep_ratio,
                            cfg.ranking);
    g.window_index = static_cast<int>(t);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

int window_count(Eigen::Index series_length, const WindowConfig& cfg) {
  if (cfg.length < 2 || cfg.stride < 1)
    throw ContractError("window length must be >= 2 and stride >= 1");
  if (series_length < cfg.length)
    throw SeriesTooShortError("series too short: L=" +
                                  std::to_string(series_length) +
                                  " < l=" + std::to_string(cfg.length),
                              series_length, cfg.length);
  return static_cast<int>((series_length - cfg.length) / cfg.stride) + 1;
}

std::vector<Matrix> partition_windows(const Matrix& series,
                                      const WindowConfig& cfg) {
  const int p = window_count(series.rows(), cfg);
  std::vector<Matrix> out;
  out.reserve(p);
  for (int t = 0; t < p; ++t)
    out.emplace_back(series.middleRows(static_cast<Eigen::Index>(t) * cfg.stride,
                                       cfg.length));
  return out;
}

Vector fourier_resample(const Vector& signal, Eigen::Index target_length) {
  const Eigen::Index n = signal.size();
  if (n < 2 || target_length < 2)
    throw ContractError("fourier_resample needs at least 2 samples in and out");
  if (!signal.allFinite())
    throw NumericError("fourier_resample: non-finite input");
  if (target_length == n) return signal;

  Eigen::FFT<double> fft;
  std::vector<Complex> in(signal.data(), signal.data() + n);
  std::vector<Complex> spec;
  fft.fwd(spec, in);

  const Eigen::Index m = target_length;
  const Eigen::Index shared = std::min(n, m);
  std::vector<Complex> out_spec(m, Complex(0.0, 0.0));
  // Bins strictly below the shared Nyquist frequency copy over directly.
  const Eigen::Index half = (shared - 1) / 2;
  out_spec[0] = spec[0];
  for (Eigen::Index k = 1; k <= half; ++k) {
    out_spec[k] = spec[k];
    out_spec[m - k] = spec[n - k];
  }
  if (shared % 2 == 0) {
    const Eigen::Index h = shared / 2;
    if (m < n) {
      // Output Nyquist bin: fold the two input bins at +/- h.
      out_spec[h] = spec[h] + spec[n - h];
    } else {
      // Input Nyquist bin is split between +/- h of the longer output.
      out_spec[h] = 0.5 * spec[h];
      out_spec[m - h] = 0.5 * spec[h];
    }
  }
  std::vector<Complex> back;
  fft.inv(back, out_spec);
  Vector out(m);
  const double gain = static_cast<double>(m) / static_cast<double>(n);
  for (Eigen::Index i = 0; i < m; ++i) out(i) = back[i].real() * gain;
  return out;
}

const char* enrichment_name(EnrichmentKind kind) {
  switch (kind) {
    case EnrichmentKind::kNone: return "none";
    case EnrichmentKind::kWarp: return "warp";
    case EnrichmentKind::kReceptiveField: return "receptive_field";
    case EnrichmentKind::kSlice: return "slice";
  }
  return "?";
}

EnrichmentKind parse_enrichment(const std::string& text) {
  if (text == "none") return EnrichmentKind::kNone;
  if (text == "warp") return EnrichmentKind::kWarp;
  if (text == "receptive_field") return EnrichmentKind::kReceptiveField;
  if (text == "slice") return EnrichmentKind::kSlice;
  throw ConfigError("unknown enrichment kind '" + text + "'");
}

EnrichmentParams EnrichmentParams::warp(double alpha) {
  EnrichmentParams p;
  p.kind = EnrichmentKind::kWarp;
  p.alpha = alpha;
  return p;
}

EnrichmentParams EnrichmentParams::receptive_field(int beta) {
  EnrichmentParams p;
  p.kind = EnrichmentKind::kReceptiveField;
  p.beta = beta;
  return p;
}

EnrichmentParams EnrichmentParams::slice(double gamma, Eigen::Index start) {
  EnrichmentParams p;
  p.kind = EnrichmentKind::kSlice;
  p.gamma = gamma;
  p.slice_start = start;
  return p;
}

void check_params(const EnrichmentParams& params,
                  const EnrichmentDomains& domains) {
  switch (params.kind) {
    case EnrichmentKind::kNone:
      return;
    case EnrichmentKind::kWarp:
      if (!in_set(params.alpha, domains.warp_ratios))
        throw ContractError("warp ratio " + std::to_string(params.alpha) +
                            " is not in the permitted set");
      return;
    case EnrichmentKind::kReceptiveField:
      if (std::find(domains.window_sizes.begin(), domains.window_sizes.end(),
                    params.beta) == domains.window_sizes.end())
        throw ContractError("window size " + std::to_string(params.beta) +
                            " is not in the permitted set");
      return;
    case EnrichmentKind::kSlice:
      if (!in_set(params.gamma, domains.slice_ratios))
        throw ContractError("slice ratio " + std::to_string(params.gamma) +
                            " is not in the permitted set");
      return;
  }
}

EnrichmentParams sample_params(EnrichmentKind kind,
                               const EnrichmentDomains& domains,
                               Eigen::Index series_length,
                               std::mt19937_64& rng) {
  auto pick = [&rng](std::size_t n) {
    if (n == 0) throw ConfigError("empty enrichment parameter domain");
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  switch (kind) {
    case EnrichmentKind::kNone:
      return EnrichmentParams::none();
    case EnrichmentKind::kWarp:
      return EnrichmentParams::warp(
          domains.warp_ratios[pick(domains.warp_ratios.size())]);
    case EnrichmentKind::kReceptiveField:
      return EnrichmentParams::receptive_field(
          domains.window_sizes[pick(domains.window_sizes.size())]);
    case EnrichmentKind::kSlice: {
      const double gamma =
          domains.slice_ratios[pick(domains.slice_ratios.size())];
      const Eigen::Index span =
          series_length - sliced_length(series_length, gamma);
      const Eigen::Index start =
          span > 0 ? std::uniform_int_distribution<Eigen::Index>(0, span)(rng)
                   : 0;
      return EnrichmentParams::slice(gamma, start);
    }
  }
  return EnrichmentParams::none();
}

EnrichmentParams neutral_params(EnrichmentKind kind, const WindowConfig& cfg) {
  switch (kind) {
    case EnrichmentKind::kWarp: return EnrichmentParams::warp(1.0);
    case EnrichmentKind::kReceptiveField:
      return EnrichmentParams::receptive_field(cfg.length);
    case EnrichmentKind::kSlice: return EnrichmentParams::slice(1.0, 0);
    case EnrichmentKind::kNone: break;
  }
  return EnrichmentParams::none();
}

Eigen::Index warped_length(Eigen::Index length, double alpha) {
  return static_cast<Eigen::Index>(
      std::llround(alpha * static_cast<double>(length)));
}

Eigen::Index sliced_length(Eigen::Index length, double gamma) {
  return static_cast<Eigen::Index>(
      std::llround(gamma * static_cast<double>(length)));
}

RoiTimeseries window_warp(const RoiTimeseries& series, double alpha) {
  if (!(alpha > 0.0)) throw ContractError("warp ratio must be positive");
  RoiTimeseries out;
  out.subject_id = series.subject_id;
  out.label = series.label;
  out.constant_columns = series.constant_columns;
  const Eigen::Index target = warped_length(series.length(), alpha);
  if (target == series.length()) {
    out.values = series.values;
    return out;
  }
  out.values.resize(target, series.roi_count());
  for (Eigen::Index c = 0; c < series.roi_count(); ++c)
    out.values.col(c) = fourier_resample(series.values.col(c), target);
  return out;
}

RoiTimeseries window_slice(const RoiTimeseries& series, double gamma,
                           Eigen::Index start) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ContractError("slice ratio must lie in (0, 1]");
  const Eigen::Index len = sliced_length(series.length(), gamma);
  if (start < 0 || start + len > series.length())
    throw BoundsError("slice start " + std::to_string(start) + " + length " +
                      std::to_string(len) + " exceeds L=" +
                      std::to_string(series.length()));
  RoiTimeseries out;
  out.subject_id = series.subject_id;
  out.label = series.label;
  out.constant_columns = series.constant_columns;
  out.values = series.values.middleRows(start, len);
  return out;
}

Matrix pearson_matrix(const Matrix& window) {
  if (window.rows() < 2)
    throw ContractError("pearson_matrix needs at least 2 rows");
  const Eigen::Index n = window.cols();
  Matrix centered = window.rowwise() - window.colwise().mean();
  std::vector<bool> live(n);
  Vector inv_norm(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    live[c] = window.col(c).maxCoeff() != window.col(c).minCoeff();
    const double norm = centered.col(c).norm();
    live[c] = live[c] && norm > 0.0;
    inv_norm(c) = live[c] ? 1.0 / norm : 0.0;
  }
  Matrix corr = centered.transpose() * centered;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        corr(i, j) = live[i] ? 1.0 : 0.0;
      } else {
        corr(i, j) = std::clamp(corr(i, j) * inv_norm(i) * inv_norm(j), -1.0, 1.0);
      }
    }
  }
  // Enforce exact symmetry regardless of summation order.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) corr(j, i) = corr(i, j);
  return corr;
}

Eigen::Index kept_edge_count(Eigen::Index nodes, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0))
    throw ContractError("keep_ratio must lie in (0, 1]");
  const Eigen::Index pairs = nodes * (nodes - 1) / 2;
  // Guard against products like 0.3 * 45 landing a hair above an integer.
  const double raw = keep_ratio * static_cast<double>(pairs);
  const double rounded = std::round(raw);
  const double k =
      std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
  return std::min<Eigen::Index>(pairs, static_cast<Eigen::Index>(k));
}

Matrix threshold_adjacency(const Matrix& weights, double keep_ratio,
                           EdgeRanking ranking) {
  if (weights.rows() != weights.cols())
    throw ContractError("threshold_adjacency needs a square matrix");
  const Eigen::Index n = weights.rows();
  const Eigen::Index k = kept_edge_count(n, keep_ratio);
  struct Edge {
    double strength;
    Eigen::Index i, j;
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = weights(i, j);
      edges.push_back(
          {ranking == EdgeRanking::kAbsolute ? std::abs(w) : w, i, j});
    }
  auto stronger = [](const Edge& a, const Edge& b) {
    if (a.strength != b.strength) return a.strength > b.strength;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  };
  std::partial_sort(edges.begin(), edges.begin() + k, edges.end(), stronger);
  Matrix adj = Matrix::Zero(n, n);
  for (Eigen::Index e = 0; e < k; ++e) {
    adj(edges[e].i, edges[e].j) = 1.0;
    adj(edges[e].j, edges[e].i) = 1.0;
  }
  return adj;
}

std::vector<WindowGraph> build_graph_sequence(const RoiTimeseries& series,
                                              const EnrichmentParams& params,
                                              const GraphConfig& cfg) {
  switch (params.kind) {
    case EnrichmentKind::kNone:
      return graphs_from(series.values, cfg.window, cfg);
    case EnrichmentKind::kWarp:
      return graphs_from(window_warp(series, params.alpha).values, cfg.window,
                         cfg);
    case EnrichmentKind::kReceptiveField: {
      WindowConfig w = cfg.window;
      w.length = params.beta;
      return graphs_from(series.values, w, cfg);
    }
    case EnrichmentKind::kSlice:
      return graphs_from(
          window_slice(series, params.gamma, params.slice_start).values,
          cfg.window, cfg);
  }
  throw ContractError("unknown enrichment kind");
}

}  // namespace sfda
