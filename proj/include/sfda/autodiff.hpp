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

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Nodes that do
// not depend on any leaf created with leaf() carry no gradient and their
// backward closures are skipped.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace sfda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // A differentiable input; its gradient is available after backward().
  Var leaf(Matrix value);

  const Matrix& value(const Var& v) const { return nodes_[v.id()].value; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  // Gradient of the last backward() target; zero matrix if untouched.
  Matrix grad(const Var& v) const;

  void backward(const Var& scalar);

  // Used by operation implementations.
  Var push(Matrix value, bool needs_grad, Backward backward);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var& v) const { return needs_grad(v.id()); }
  // Mutable gradient buffer of a node, zero-initialized on first access.
  Matrix& grad_ref(int id);
  // Read-only gradient of a node during the backward sweep.
  const Matrix& upstream(int id) const { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Arithmetic.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& row);  // broadcast a 1 x d row
Var scale(const Var& x, double c);
Var scalar_mul(const Var& s, const Var& x);  // s is 1 x 1
Var hadamard(const Var& a, const Var& b);

// Elementwise nonlinearities. gelu uses the exact erf form.
Var gelu(const Var& x);
Var sigmoid(const Var& x);

// Shape manipulation.
Var tile_rows(const Var& x, int times);
Var concat_cols(const Var& a, const Var& b);
Var row_slice(const Var& x, Eigen::Index start, Eigen::Index count);
Var stack_rows(const std::vector<Var>& parts);

// Block-structured operations. `blocks` is a vertical stack of square
// block x block matrices; block_matmul multiplies each with the matching
// row block of h.
Var block_matmul(const Var& blocks, const Var& h);
Var block_row_mean(const Var& x, Eigen::Index block);
// out(t, :) = 1/N * sum_i weights(t, i) * h(t*N + i, :), N = weights.cols().
Var weighted_block_mean(const Var& h, const Var& weights);

Var softmax_rows(const Var& x);
Var mean_rows(const Var& x);  // 1 x d

// Reductions to 1 x 1.
Var sum(const Var& x);
Var sum_squares(const Var& x);

// Batch normalization over rows (samples) with per-column statistics.
// Biased batch variance is used for normalization; the unbiased estimate
// is reported through `batch_var` for running statistics.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta,
                     double eps, Matrix* batch_mean = nullptr,
                     Matrix* batch_var = nullptr);
Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta,
                    const Matrix& running_mean, const Matrix& running_var,
                    double eps);

// Mean binary cross-entropy of n x 1 logits against 0/1 labels, in the
// log-sum-exp stable form.
Var bce_with_logits(const Var& logits, const Vector& labels);

}  // namespace ad
}  // namespace sfda
