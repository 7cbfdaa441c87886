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
#include "sfda/optimizer.hpp"

#include <cmath>

#include "sfda/error.hpp"

namespace sfda {

Adam::Adam(const EncoderParams& like, AdamConfig config) : config_(config) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  EncoderParams::each(like, [&](const std::string&, const Matrix& p,
                                TensorRole) {
    shapes.emplace_back(p.rows(), p.cols());
  });
  std::size_t i = 0;
  EncoderTensors<Matrix>::each(m_, [&](const std::string&, Matrix& m,
                                       TensorRole) {
    m = Matrix::Zero(shapes[i].first, shapes[i].second);
    ++i;
  });
  v_ = m_;
}

void Adam::step(EncoderParams& params, const EncoderGrads& grads, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  std::vector<const Matrix*> g;
  EncoderGrads::each(grads, [&](const std::string&, const Matrix& m,
                                TensorRole) { g.push_back(&m); });
  std::vector<Matrix*> m1, m2;
  EncoderTensors<Matrix>::each(m_, [&](const std::string&, Matrix& m,
                                       TensorRole) { m1.push_back(&m); });
  EncoderTensors<Matrix>::each(v_, [&](const std::string&, Matrix& m,
                                       TensorRole) { m2.push_back(&m); });
  std::size_t i = 0;
  EncoderParams::each(params, [&](const std::string& name, Matrix& p,
                                  TensorRole role) {
    const std::size_t k = i++;
    if (role != TensorRole::kTrainable) return;
    if (g[k]->rows() != p.rows() || g[k]->cols() != p.cols())
      throw ContractError("adam: gradient shape mismatch for " + name);
    *m1[k] = config_.beta1 * *m1[k] + (1.0 - config_.beta1) * *g[k];
    *m2[k] = config_.beta2 * *m2[k] +
             (1.0 - config_.beta2) * g[k]->cwiseProduct(*g[k]);
    p.array() -= lr * (m1[k]->array() / c1) /
                 ((m2[k]->array() / c2).sqrt() + config_.eps);
  });
}

}  // namespace sfda
