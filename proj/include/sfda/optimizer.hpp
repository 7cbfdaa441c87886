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

#include "sfda/encoder.hpp"

namespace sfda {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer over the trainable tensors of one encoder.
class Adam {
 public:
  Adam() = default;
  Adam(const EncoderParams& like, AdamConfig config = {});

  void step(EncoderParams& params, const EncoderGrads& grads, double lr);

  long steps() const { return steps_; }
  void set_steps(long steps) { steps_ = steps; }
  EncoderTensors<Matrix>& first_moment() { return m_; }
  EncoderTensors<Matrix>& second_moment() { return v_; }
  const EncoderTensors<Matrix>& first_moment() const { return m_; }
  const EncoderTensors<Matrix>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  long steps_ = 0;
  EncoderTensors<Matrix> m_;
  EncoderTensors<Matrix> v_;
};

}  // namespace sfda
