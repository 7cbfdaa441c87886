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

#include <vector>

#include "sfda/autodiff.hpp"
#include "sfda/encoder.hpp"

namespace sfda {

// Per-branch outputs for a batch of subjects: features[i] is the
// N_T x D feature matrix of branch i, logits[i] its N_T logits.
struct ConsistencyBatch {
  std::vector<Matrix> features;
  std::vector<Vector> logits;

  std::size_t branches() const { return features.size(); }
  Eigen::Index subjects() const {
    return features.empty() ? 0 : features.front().rows();
  }
  // Throws ContractError on inconsistent shapes or fewer than 2 branches.
  void validate() const;
};

// kOrdered sums over all i != j, so every unordered pair counts twice.
enum class PairMode { kOrdered, kUnordered };

// Mean binary cross-entropy on logits.
double bce_loss(const Vector& logits, const Vector& labels);

// (1/N_T) sum_n sum_{i != j} ||H_n^i - H_n^j||^2
double feature_consistency(const ConsistencyBatch& batch,
                           PairMode pairs = PairMode::kOrdered);
// Same with scalar logits.
double logit_consistency(const ConsistencyBatch& batch,
                         PairMode pairs = PairMode::kOrdered);
// Unweighted sum of the two terms above.
double mutual_consistency(const ConsistencyBatch& batch,
                          PairMode pairs = PairMode::kOrdered);

// Differentiable mutual consistency over per-branch (N_T x D features,
// N_T x 1 logits) recorded on one tape.
ad::Var mutual_consistency(const std::vector<ad::Var>& features,
                           const std::vector<ad::Var>& logits,
                           PairMode pairs = PairMode::kOrdered);

// Elementwise mean of every tensor, normalization statistics included.
EncoderParams average_parameters(const std::vector<EncoderParams>& branches);

}  // namespace sfda
