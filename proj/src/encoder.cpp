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
#include "sfda/encoder.hpp"

#include <cmath>

#include "sfda/error.hpp"

namespace sfda {
namespace {

using ad::Tape;
using ad::Var;

NormTensors<Matrix> identity_norm(int width) {
  return {Matrix::Ones(1, width), Matrix::Zero(1, width),
          Matrix::Zero(1, width), Matrix::Ones(1, width)};
}

struct Forward {
  Tape& tape;
  const EncoderParams& params;
  const EncoderTensors<Var>& vars;
  const ForwardOptions& options;
  NormBatchStats* stats;

  Var activate(const Var& x) const {
    return options.identity_activation ? x : ad::gelu(x);
  }

  Var norm(const Var& x, const NormTensors<Var>& v,
           const NormTensors<Matrix>& m) const {
    if (options.disable_norm) return x;
    if (options.mode == Mode::kTrain) {
      Matrix mean, var;
      Var y = ad::batch_norm_train(x, v.gamma, v.beta, options.norm_eps, &mean,
                                   &var);
      if (stats) {
        stats->mean.push_back(std::move(mean));
        stats->var.push_back(std::move(var));
      }
      return y;
    }
    return ad::batch_norm_eval(x, v.gamma, v.beta, m.running_mean,
                               m.running_var, options.norm_eps);
  }

  // (eps * I + A_t) H_t W for every window block, then norm + activation.
  Var gin(int k, const Var& blocks, const Var& h) const {
    const auto& layer = vars.gin[k];
    Var agg = ad::add(ad::block_matmul(blocks, h),
                      ad::scalar_mul(layer.epsilon, h));
    return activate(norm(ad::matmul(agg, layer.weight), layer.norm,
                         params.gin[k].norm));
  }

  // Returns (M: P x N, H_hat: P x D) for stacked node features P*N x D.
  std::pair<Var, Var> spatial(const Var& h, Eigen::Index nodes) const {
    Var pooled = ad::block_row_mean(h, nodes);
    Var squeezed =
        activate(norm(ad::matmul(pooled, vars.se_w1), vars.se_norm,
                      params.se_norm));
    Var scores = ad::matmul_nt(squeezed, vars.se_w2);
    Var m = options.unit_spatial_attention
                ? tape.constant(Matrix::Ones(scores.rows(), scores.cols()))
                : ad::sigmoid(scores);
    return {m, ad::weighted_block_mean(h, m)};
  }

  // Self-attention within each subject's row block of h_hat, followed by
  // the post-attention MLP. `counts` gives window counts per subject.
  Var temporal(const Var& h_hat, const std::vector<Eigen::Index>& counts,
               std::vector<Matrix>* weights) const {
    Var q = ad::add_row(ad::matmul(h_hat, vars.phi1_w), vars.phi1_b);
    Var k = ad::add_row(ad::matmul(h_hat, vars.phi2_w), vars.phi2_b);
    Var v = ad::add_row(ad::matmul(h_hat, vars.phi3_w), vars.phi3_b);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h_hat.cols()));
    std::vector<Var> parts;
    parts.reserve(counts.size());
    Eigen::Index offset = 0;
    for (Eigen::Index p : counts) {
      Var z = ad::softmax_rows(ad::scale(
          ad::matmul_nt(ad::row_slice(q, offset, p), ad::row_slice(k, offset, p)),
          inv_sqrt_d));
      if (weights) weights->push_back(z.value());
      parts.push_back(ad::matmul(z, ad::row_slice(v, offset, p)));
      offset += p;
    }
    Var attended = parts.size() == 1 ? parts.front() : ad::stack_rows(parts);
    return activate(ad::add_row(ad::matmul(attended, vars.mlp_w), vars.mlp_b));
  }
};

void check_graphs(const GraphSequence& graphs, Eigen::Index nodes) {
  if (graphs.empty()) throw ContractError("encoder: empty graph sequence");
  for (const auto& g : graphs)
    if (g.adjacency.rows() != nodes || g.adjacency.cols() != nodes)
      throw ContractError("encoder: graph has " +
                          std::to_string(g.adjacency.rows()) +
                          " nodes, model expects " + std::to_string(nodes));
}

}  // namespace

EncoderParams EncoderParams::initialize(const EncoderShape& shape,
                                        std::mt19937_64& rng) {
  if (shape.roi_count < 2) throw ContractError("encoder needs at least 2 ROIs");
  if (shape.feature_dim < 2 || shape.feature_dim % 2 != 0)
    throw ContractError("feature_dim must be an even number >= 2");
  const int n = shape.roi_count, d = shape.feature_dim, h = shape.layer_width();
  EncoderParams p;
  p.shape = shape;
  auto uniform = [&rng](int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = u(rng);
    return m;
  };
  p.gin[0] = {uniform(n, h, n), Matrix::Zero(1, 1), identity_norm(h)};
  p.gin[1] = {uniform(h, h, h), Matrix::Zero(1, 1), identity_norm(h)};
  p.se_w1 = uniform(d, d, d);
  p.se_norm = identity_norm(d);
  p.se_w2 = uniform(n, d, d);
  p.phi1_w = uniform(d, d, d);
  p.phi1_b = uniform(1, d, d);
  p.phi2_w = uniform(d, d, d);
  p.phi2_b = uniform(1, d, d);
  p.phi3_w = uniform(d, d, d);
  p.phi3_b = uniform(1, d, d);
  p.mlp_w = uniform(d, d, d);
  p.mlp_b = uniform(1, d, d);
  p.head_w = uniform(1, d, d);
  p.head_b = uniform(1, 1, d);
  return p;
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  each(*this, [&ok](const std::string&, const Matrix& m, TensorRole) {
    ok = ok && m.allFinite();
  });
  return ok;
}

bool EncoderParams::same_shape(const EncoderParams& other) const {
  if (!(shape == other.shape)) return false;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> a, b;
  each(*this, [&a](const std::string&, const Matrix& m, TensorRole) {
    a.emplace_back(m.rows(), m.cols());
  });
  each(other, [&b](const std::string&, const Matrix& m, TensorRole) {
    b.emplace_back(m.rows(), m.cols());
  });
  return a == b;
}

std::size_t EncoderParams::trainable_count() const {
  std::size_t n = 0;
  each(*this, [&n](const std::string&, const Matrix& m, TensorRole role) {
    if (role == TensorRole::kTrainable) n += static_cast<std::size_t>(m.size());
  });
  return n;
}

void update_running_stats(EncoderParams& params, const NormBatchStats& stats,
                          double momentum) {
  if (stats.mean.empty()) return;
  if (stats.mean.size() != 3 || stats.var.size() != 3)
    throw ContractError("update_running_stats expects three norm layers");
  NormTensors<Matrix>* layers[3] = {&params.gin[0].norm, &params.gin[1].norm,
                                    &params.se_norm};
  for (int i = 0; i < 3; ++i) {
    layers[i]->running_mean =
        (1.0 - momentum) * layers[i]->running_mean + momentum * stats.mean[i];
    layers[i]->running_var =
        (1.0 - momentum) * layers[i]->running_var + momentum * stats.var[i];
  }
}

EncoderTensors<Var> bind(Tape& tape, const EncoderParams& params,
                         bool differentiable) {
  EncoderTensors<Var> vars;
  std::vector<Var> bound;
  EncoderParams::each(params, [&](const std::string&, const Matrix& m,
                                  TensorRole role) {
    bound.push_back(differentiable && role == TensorRole::kTrainable
                        ? tape.leaf(m)
                        : tape.constant(m));
  });
  std::size_t i = 0;
  EncoderTensors<Var>::each(vars, [&](const std::string&, Var& v, TensorRole) {
    v = bound[i++];
  });
  return vars;
}

EncoderGrads gradients(const Tape& tape, const EncoderTensors<Var>& vars) {
  std::vector<Matrix> grads;
  EncoderTensors<Var>::each(vars, [&](const std::string&, const Var& v,
                                      TensorRole role) {
    grads.push_back(role == TensorRole::kTrainable
                        ? tape.grad(v)
                        : Matrix::Zero(v.rows(), v.cols()));
  });
  EncoderGrads out;
  std::size_t i = 0;
  EncoderGrads::each(out, [&](const std::string&, Matrix& m, TensorRole) {
    m = std::move(grads[i++]);
  });
  return out;
}

BatchTrace encode_batch(Tape& tape, const EncoderParams& params,
                        const EncoderTensors<Var>& vars,
                        const std::vector<const GraphSequence*>& subjects,
                        const ForwardOptions& options) {
  if (subjects.empty()) throw ContractError("encoder: empty batch");
  const Eigen::Index n = params.shape.roi_count;
  std::vector<Eigen::Index> counts;
  Eigen::Index total = 0;
  for (const GraphSequence* s : subjects) {
    check_graphs(*s, n);
    counts.push_back(static_cast<Eigen::Index>(s->size()));
    total += counts.back();
  }
  Matrix blocks(total * n, n);
  {
    Eigen::Index row = 0;
    for (const GraphSequence* s : subjects)
      for (const auto& g : *s) {
        blocks.middleRows(row, n) = g.adjacency;
        row += n;
      }
  }

  BatchTrace trace;
  Forward f{tape, params, vars, options, &trace.stats};
  const Var adjacency = tape.constant(std::move(blocks));
  const Var one_hot = tape.constant(Matrix::Identity(n, n).replicate(total, 1));
  const Var h1 = f.gin(0, adjacency, one_hot);
  const Var h2 = f.gin(1, adjacency, h1);
  const Var h = ad::concat_cols(h1, h2);
  const auto [m, h_hat] = f.spatial(h, n);
  const Var temporal = f.temporal(h_hat, counts, nullptr);

  std::vector<Var> pooled;
  pooled.reserve(counts.size());
  trace.attention.resize(static_cast<Eigen::Index>(counts.size()), n);
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    pooled.push_back(ad::mean_rows(ad::row_slice(temporal, offset, counts[b])));
    trace.attention.row(static_cast<Eigen::Index>(b)) =
        m.value().middleRows(offset, counts[b]).colwise().mean();
    offset += counts[b];
  }
  trace.features = pooled.size() == 1 ? pooled.front() : ad::stack_rows(pooled);
  trace.logits =
      ad::add_row(ad::matmul_nt(trace.features, vars.head_w), vars.head_b);
  return trace;
}

std::vector<BranchOutput> encode_many(
    const std::vector<const GraphSequence*>& subjects,
    const EncoderParams& params, const ForwardOptions& options) {
  if (subjects.empty()) return {};
  Tape tape;
  const auto vars = bind(tape, params, false);
  const BatchTrace trace = encode_batch(tape, params, vars, subjects, options);
  std::vector<BranchOutput> out(subjects.size());
  for (std::size_t b = 0; b < subjects.size(); ++b) {
    const auto r = static_cast<Eigen::Index>(b);
    out[b].features = trace.features.value().row(r).transpose();
    out[b].logit = trace.logits.value()(r, 0);
    out[b].attention = trace.attention.row(r).transpose();
  }
  return out;
}

BranchOutput encode_subject(const GraphSequence& graphs,
                            const EncoderParams& params,
                            const ForwardOptions& options) {
  return encode_many({&graphs}, params, options).front();
}

double predict_probability(double logit) {
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

Matrix gin_layer_forward(const Matrix& h_prev, const Matrix& adjacency,
                         const GinTensors<Matrix>& layer,
                         const ForwardOptions& options) {
  if (adjacency.rows() != adjacency.cols() || adjacency.rows() != h_prev.rows() ||
      layer.weight.rows() != h_prev.cols())
    throw ContractError("gin_layer_forward: shape mismatch");
  Tape tape;
  EncoderParams holder;
  holder.gin[0] = layer;
  EncoderTensors<Var> vars;
  vars.gin[0].weight = tape.constant(layer.weight);
  vars.gin[0].epsilon = tape.constant(layer.epsilon);
  vars.gin[0].norm.gamma = tape.constant(layer.norm.gamma);
  vars.gin[0].norm.beta = tape.constant(layer.norm.beta);
  Forward f{tape, holder, vars, options, nullptr};
  return f.gin(0, tape.constant(adjacency), tape.constant(h_prev)).value();
}

SpatialAttention spatial_attention(const Matrix& h, const EncoderParams& params,
                                   const ForwardOptions& options) {
  if (h.rows() != params.shape.roi_count || h.cols() != params.shape.feature_dim)
    throw ContractError("spatial_attention: expected N x D node features");
  Tape tape;
  const auto vars = bind(tape, params, false);
  Forward f{tape, params, vars, options, nullptr};
  const auto [m, h_hat] = f.spatial(tape.constant(h), h.rows());
  return {m.value().row(0).transpose(), h_hat.value().row(0).transpose()};
}

TemporalAttention temporal_attention(const Matrix& h_hat,
                                     const EncoderParams& params,
                                     const ForwardOptions& options) {
  if (h_hat.rows() < 1 || h_hat.cols() != params.shape.feature_dim)
    throw ContractError("temporal_attention: expected p x D window features");
  Tape tape;
  const auto vars = bind(tape, params, false);
  Forward f{tape, params, vars, options, nullptr};
  std::vector<Matrix> weights;
  const Var out = f.temporal(tape.constant(h_hat), {h_hat.rows()}, &weights);
  return {out.value(), weights.front()};
}

}  // namespace sfda
