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

// Spatiotemporal graph encoder and class predictor.
//
// Per window t the node features go through two GIN layers
//     H^k = act(norm((eps_k * I + A_t) H^{k-1} W_k)),   H^0 = I (one-hot)
// whose outputs are concatenated to N x D. A squeeze-excitation block
// scores each ROI, M = sigmoid(W2 act(norm(W1 mean_nodes(H)))), and the
// window embedding is the M-weighted node mean. Window embeddings pass a
// single-head self-attention layer and a one-layer MLP, are averaged over
// windows, and a linear head produces the logit.
//
// Matrices are node-major: rows are nodes (or windows), columns features.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "sfda/autodiff.hpp"
#include "sfda/enrichment.hpp"

namespace sfda {

enum class TensorRole { kTrainable, kStatistic };

template <class T>
struct NormTensors {
  T gamma;
  T beta;
  T running_mean;
  T running_var;
};

template <class T>
struct GinTensors {
  T weight;   // d_in x d_out, bias-free
  T epsilon;  // 1 x 1
  NormTensors<T> norm;
};

template <class T>
struct EncoderTensors {
  static constexpr int kGinLayers = 2;

  std::array<GinTensors<T>, kGinLayers> gin;
  T se_w1;  // D x D
  NormTensors<T> se_norm;
  T se_w2;  // N x D
  T phi1_w, phi1_b;
  T phi2_w, phi2_b;
  T phi3_w, phi3_b;
  T mlp_w, mlp_b;
  T head_w;  // 1 x D
  T head_b;  // 1 x 1

  // Calls f(name, tensor, role) for every tensor in canonical order.
  template <class Self, class F>
  static void each(Self& self, F&& f) {
    for (int k = 0; k < kGinLayers; ++k) {
      const std::string p = "gin." + std::to_string(k) + ".";
      f(p + "W", self.gin[k].weight, TensorRole::kTrainable);
      f(p + "eps", self.gin[k].epsilon, TensorRole::kTrainable);
      each_norm(p + "bn.", self.gin[k].norm, f);
    }
    f("se.w1", self.se_w1, TensorRole::kTrainable);
    each_norm("se.bn.", self.se_norm, f);
    f("se.w2", self.se_w2, TensorRole::kTrainable);
    f("attn.phi1.W", self.phi1_w, TensorRole::kTrainable);
    f("attn.phi1.b", self.phi1_b, TensorRole::kTrainable);
    f("attn.phi2.W", self.phi2_w, TensorRole::kTrainable);
    f("attn.phi2.b", self.phi2_b, TensorRole::kTrainable);
    f("attn.phi3.W", self.phi3_w, TensorRole::kTrainable);
    f("attn.phi3.b", self.phi3_b, TensorRole::kTrainable);
    f("attn.mlp.W", self.mlp_w, TensorRole::kTrainable);
    f("attn.mlp.b", self.mlp_b, TensorRole::kTrainable);
    f("head.W", self.head_w, TensorRole::kTrainable);
    f("head.b", self.head_b, TensorRole::kTrainable);
  }

 private:
  template <class N, class F>
  static void each_norm(const std::string& p, N& n, F& f) {
    f(p + "gamma", n.gamma, TensorRole::kTrainable);
    f(p + "beta", n.beta, TensorRole::kTrainable);
    f(p + "mean", n.running_mean, TensorRole::kStatistic);
    f(p + "var", n.running_var, TensorRole::kStatistic);
  }
};

struct EncoderShape {
  int roi_count = 0;
  int feature_dim = 64;  // D; each GIN layer is D/2 wide

  int layer_width() const { return feature_dim / 2; }
  bool operator==(const EncoderShape&) const = default;
};

struct EncoderParams : EncoderTensors<Matrix> {
  EncoderShape shape;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, eps = 0,
  // identity normalization statistics.
  static EncoderParams initialize(const EncoderShape& shape,
                                  std::mt19937_64& rng);

  bool all_finite() const;
  bool same_shape(const EncoderParams& other) const;
  std::size_t trainable_count() const;
};

// Gradient container with the same layout as EncoderParams.
using EncoderGrads = EncoderTensors<Matrix>;

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  double norm_eps = 1e-5;
  // Analytic-test switches.
  bool disable_norm = false;         // skip every normalization layer
  bool identity_activation = false;  // GELU -> identity in GIN and MLP
  bool unit_spatial_attention = false;  // force M = 1
};

// Batch statistics observed by a training-mode forward pass, in the order
// gin.0.bn, gin.1.bn, se.bn.
struct NormBatchStats {
  std::vector<Matrix> mean;
  std::vector<Matrix> var;  // unbiased
};

// Applies exponential running-average updates to the statistic tensors.
void update_running_stats(EncoderParams& params, const NormBatchStats& stats,
                          double momentum = 0.1);

// Places every tensor on the tape: trainables as leaves when
// `differentiable`, otherwise as constants.
EncoderTensors<ad::Var> bind(ad::Tape& tape, const EncoderParams& params,
                             bool differentiable);

// Reads gradients of bound trainables after tape.backward(). Statistic
// entries come back as zero matrices.
EncoderGrads gradients(const ad::Tape& tape,
                       const EncoderTensors<ad::Var>& vars);

struct BatchTrace {
  ad::Var features;  // B x D, window-averaged spatiotemporal features
  ad::Var logits;    // B x 1
  Matrix attention;  // B x N, window-averaged spatial attention
  NormBatchStats stats;
};

using GraphSequence = std::vector<WindowGraph>;

// Records the forward pass of a batch of subjects on `tape`. In training
// mode normalization statistics are pooled over the whole batch.
BatchTrace encode_batch(ad::Tape& tape, const EncoderParams& params,
                        const EncoderTensors<ad::Var>& vars,
                        const std::vector<const GraphSequence*>& subjects,
                        const ForwardOptions& options);

struct BranchOutput {
  Vector features;   // D
  double logit = 0;
  Vector attention;  // N
};

BranchOutput encode_subject(const GraphSequence& graphs,
                            const EncoderParams& params,
                            const ForwardOptions& options = {});

// Eval-mode encoding of many subjects; equivalent to encode_subject per
// subject.
std::vector<BranchOutput> encode_many(
    const std::vector<const GraphSequence*>& subjects,
    const EncoderParams& params, const ForwardOptions& options = {});

// Stable logistic function.
double predict_probability(double logit);

// Building blocks exposed for analytic testing. They run on a private tape.

// H_prev: N x d_in node features, adjacency: N x N.
Matrix gin_layer_forward(const Matrix& h_prev, const Matrix& adjacency,
                         const GinTensors<Matrix>& layer,
                         const ForwardOptions& options);

struct SpatialAttention {
  Vector scores;    // M, length N
  Vector embedding; // H_hat_t, length D
};

// h: N x D concatenated node features of one window.
SpatialAttention spatial_attention(const Matrix& h, const EncoderParams& params,
                                   const ForwardOptions& options);

struct TemporalAttention {
  Matrix output;  // p x D
  Matrix weights; // Z, p x p
};

// h_hat: p x D window embeddings of one subject.
TemporalAttention temporal_attention(const Matrix& h_hat,
                                     const EncoderParams& params,
                                     const ForwardOptions& options);

}  // namespace sfda
