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

// Data feeding: sliding windows, the three enrichment transforms, Pearson
// connectivity and top-k binary adjacency.

#include <random>
#include <vector>

#include "sfda/data.hpp"

namespace sfda {

struct WindowConfig {
  int length = 40;
  int stride = 30;
};

// Number of windows for a series of `series_length` points:
// floor((L - l) / s) + 1. Throws SeriesTooShortError when L < l.
int window_count(Eigen::Index series_length, const WindowConfig& cfg);

// Returns the l x N sub-matrices starting at 0, s, 2s, ...
std::vector<Matrix> partition_windows(const Matrix& series,
                                      const WindowConfig& cfg);

// Fourier-domain resampling of a real signal to `target_length` samples.
// The spectrum is truncated or zero-padded with the Nyquist bin split or
// folded so the output stays real; amplitude is rescaled so constants are
// preserved.
Vector fourier_resample(const Vector& signal, Eigen::Index target_length);

enum class EnrichmentKind { kNone, kWarp, kReceptiveField, kSlice };

const char* enrichment_name(EnrichmentKind kind);
EnrichmentKind parse_enrichment(const std::string& text);

// Permitted parameter sets for each enrichment kind.
struct EnrichmentDomains {
  std::vector<double> warp_ratios{1.0 / 1.3, 1.0 / 1.1, 1.0, 1.1, 1.3};
  std::vector<int> window_sizes{40, 60, 80, 100};
  std::vector<double> slice_ratios{0.85, 0.90, 0.95, 1.00};
};

struct EnrichmentParams {
  EnrichmentKind kind = EnrichmentKind::kNone;
  double alpha = 1.0;    // warp ratio
  int beta = 40;         // receptive-field window size
  double gamma = 1.0;    // slice ratio
  Eigen::Index slice_start = 0;

  static EnrichmentParams none() { return {}; }
  static EnrichmentParams warp(double alpha);
  static EnrichmentParams receptive_field(int beta);
  static EnrichmentParams slice(double gamma, Eigen::Index start);
};

// Throws ContractError if a parameter falls outside its permitted set.
void check_params(const EnrichmentParams& params,
                  const EnrichmentDomains& domains);

// Draws a parameter set for `kind` uniformly from its domain; for slicing
// the start offset is drawn uniformly from the valid range for
// `series_length`.
EnrichmentParams sample_params(EnrichmentKind kind,
                               const EnrichmentDomains& domains,
                               Eigen::Index series_length, std::mt19937_64& rng);

// The neutral view used at inference: warp 1, window 40, slice 1.0.
EnrichmentParams neutral_params(EnrichmentKind kind, const WindowConfig& cfg);

Eigen::Index warped_length(Eigen::Index length, double alpha);
Eigen::Index sliced_length(Eigen::Index length, double gamma);

RoiTimeseries window_warp(const RoiTimeseries& series, double alpha);
RoiTimeseries window_slice(const RoiTimeseries& series, double gamma,
                           Eigen::Index start);

// Sample Pearson correlation of every column pair. Zero-variance columns
// correlate 0 with everything, including themselves.
Matrix pearson_matrix(const Matrix& window);

enum class EdgeRanking { kSigned, kAbsolute };

struct GraphConfig {
  WindowConfig window;
  double keep_ratio = 0.3;
  EdgeRanking ranking = EdgeRanking::kSigned;
};

// Number of kept upper-triangle edges: ceil(keep_ratio * N(N-1)/2).
Eigen::Index kept_edge_count(Eigen::Index nodes, double keep_ratio);

// Keeps the k strongest strict-upper-triangle entries (ties broken by
// ascending (i, j)), symmetrized, zero diagonal.
Matrix threshold_adjacency(const Matrix& weights, double keep_ratio,
                           EdgeRanking ranking = EdgeRanking::kSigned);

struct WindowGraph {
  Matrix adjacency;  // binary, symmetric, zero diagonal
  int window_index = 0;
  // Node features are the N x N identity and are not stored.
  Eigen::Index node_count() const { return adjacency.rows(); }
};

std::vector<WindowGraph> build_graph_sequence(const RoiTimeseries& series,
                                              const EnrichmentParams& params,
                                              const GraphConfig& cfg);

}  // namespace sfda
