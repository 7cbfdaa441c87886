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
#include "sfda/objectives.hpp"

#include <cmath>

#include "sfda/error.hpp"

namespace sfda {
namespace {

template <class Distance>
double pairwise(std::size_t m, Eigen::Index subjects, PairMode pairs,
                Distance&& dist) {
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      if (pairs == PairMode::kUnordered && j < i) continue;
      total += dist(i, j);
    }
  return total / static_cast<double>(subjects);
}

}  // namespace

void ConsistencyBatch::validate() const {
  if (features.size() < 2)
    throw ContractError("consistency needs at least 2 branches");
  if (logits.size() != features.size())
    throw ContractError("consistency: feature and logit branch counts differ");
  const Eigen::Index n = features.front().rows();
  if (n < 1) throw ContractError("consistency: empty batch");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].rows() != n || features[i].cols() != features[0].cols() ||
        logits[i].size() != n)
      throw ContractError("consistency: branch shapes differ");
  }
}

double bce_loss(const Vector& logits, const Vector& labels) {
  if (logits.size() != labels.size())
    throw ContractError("bce_loss: logits and labels differ in length");
  if (logits.size() < 1) throw ContractError("bce_loss: empty input");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits(i);
    total += std::max(z, 0.0) - z * labels(i) +
             std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.size());
}

double feature_consistency(const ConsistencyBatch& batch, PairMode pairs) {
  batch.validate();
  return pairwise(batch.branches(), batch.subjects(), pairs,
                  [&](std::size_t i, std::size_t j) {
                    return (batch.features[i] - batch.features[j]).squaredNorm();
                  });
}

double logit_consistency(const ConsistencyBatch& batch, PairMode pairs) {
  batch.validate();
  return pairwise(batch.branches(), batch.subjects(), pairs,
                  [&](std::size_t i, std::size_t j) {
                    return (batch.logits[i] - batch.logits[j]).squaredNorm();
                  });
}

double mutual_consistency(const ConsistencyBatch& batch, PairMode pairs) {
  return feature_consistency(batch, pairs) + logit_consistency(batch, pairs);
}

ad::Var mutual_consistency(const std::vector<ad::Var>& features,
                           const std::vector<ad::Var>& logits,
                           PairMode pairs) {
  if (features.size() < 2 || logits.size() != features.size())
    throw ContractError("consistency needs matching feature/logit branches");
  const Eigen::Index n = features.front().rows();
  // ||a - b||^2 is symmetric, so ordered pairs are the unordered sum doubled.
  const double factor = (pairs == PairMode::kOrdered ? 2.0 : 1.0) /
                        static_cast<double>(n);
  ad::Var total;
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      ad::Var term =
          ad::add(ad::sum_squares(ad::sub(features[i], features[j])),
                  ad::sum_squares(ad::sub(logits[i], logits[j])));
      total = total.valid() ? ad::add(total, term) : term;
    }
  return ad::scale(total, factor);
}

EncoderParams average_parameters(const std::vector<EncoderParams>& branches) {
  if (branches.empty())
    throw ContractError("average_parameters: no branches given");
  for (const auto& b : branches)
    if (!b.same_shape(branches.front()))
      throw ContractError("average_parameters: branch shapes differ");
  // Running mean: identical branches reproduce their tensors bit for bit.
  EncoderParams out = branches.front();
  std::vector<Matrix*> slots;
  EncoderParams::each(out, [&](const std::string&, Matrix& m, TensorRole) {
    slots.push_back(&m);
  });
  for (std::size_t k = 1; k < branches.size(); ++k) {
    const double inv = 1.0 / static_cast<double>(k + 1);
    std::size_t i = 0;
    EncoderParams::each(branches[k], [&](const std::string&, const Matrix& m,
                                         TensorRole) {
      Matrix& acc = *slots[i++];
      acc += (m - acc) * inv;
    });
  }
  return out;
}

}  // namespace sfda
