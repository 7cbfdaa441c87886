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
#include "sfda/autodiff.hpp"

#include <functional>

#include "test_util.hpp"

namespace sfda {
namespace {

using ad::Tape;
using ad::Var;
using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Projects the op output onto a fixed random direction so that every output
// entry contributes to the scalar being differentiated.
double scalar_value(const Fn& f, const std::vector<Matrix>& inputs,
                    std::vector<Matrix>* grads) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  const Var out = f(tape, leaves);
  std::mt19937_64 rng(99);
  const Var proj = tape.constant(
      testing::random_matrix(out.rows(), out.cols(), rng));
  const Var s = ad::sum(ad::hadamard(out, proj));
  if (grads) {
    tape.backward(s);
    grads->clear();
    for (const auto& l : leaves) grads->push_back(tape.grad(l));
  }
  return s.value()(0, 0);
}

void expect_gradients(const Fn& f, std::vector<Matrix> inputs,
                      double tol = 1e-6) {
  std::vector<Matrix> analytic;
  scalar_value(f, inputs, &analytic);
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k](i);
      inputs[k](i) = orig + h;
      const double up = scalar_value(f, inputs, nullptr);
      inputs[k](i) = orig - h;
      const double down = scalar_value(f, inputs, nullptr);
      inputs[k](i) = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k](i);
      EXPECT_NEAR(a, numeric, tol * std::max(1.0, std::abs(numeric)))
          << "input " << k << " entry " << i;
    }
  }
}

class AutodiffTest : public ::testing::Test {
 protected:
  Matrix rand(Eigen::Index r, Eigen::Index c) {
    return testing::random_matrix(r, c, rng_);
  }
  std::mt19937_64 rng_{7};
};

TEST_F(AutodiffTest, MatmulAndTransposedMatmul) {
  expect_gradients([](Tape&, const auto& v) { return ad::matmul(v[0], v[1]); },
                   {rand(3, 4), rand(4, 2)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::matmul_nt(v[0], v[1]); },
      {rand(3, 4), rand(5, 4)});
}

TEST_F(AutodiffTest, ElementwiseArithmetic) {
  expect_gradients([](Tape&, const auto& v) { return ad::add(v[0], v[1]); },
                   {rand(3, 2), rand(3, 2)});
  expect_gradients([](Tape&, const auto& v) { return ad::sub(v[0], v[1]); },
                   {rand(3, 2), rand(3, 2)});
  expect_gradients([](Tape&, const auto& v) { return ad::add_row(v[0], v[1]); },
                   {rand(4, 3), rand(1, 3)});
  expect_gradients([](Tape&, const auto& v) { return ad::scale(v[0], -2.5); },
                   {rand(2, 2)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::scalar_mul(v[0], v[1]); },
      {rand(1, 1), rand(3, 3)});
  expect_gradients([](Tape&, const auto& v) { return ad::hadamard(v[0], v[1]); },
                   {rand(2, 3), rand(2, 3)});
}

TEST_F(AutodiffTest, Nonlinearities) {
  expect_gradients([](Tape&, const auto& v) { return ad::gelu(v[0]); },
                   {rand(4, 3)});
  expect_gradients([](Tape&, const auto& v) { return ad::sigmoid(v[0]); },
                   {rand(4, 3)});
  expect_gradients([](Tape&, const auto& v) { return ad::softmax_rows(v[0]); },
                   {rand(3, 4)});
}

TEST_F(AutodiffTest, ShapeOperations) {
  expect_gradients([](Tape&, const auto& v) { return ad::tile_rows(v[0], 3); },
                   {rand(2, 2)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::concat_cols(v[0], v[1]); },
      {rand(3, 2), rand(3, 1)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::row_slice(v[0], 1, 2); },
      {rand(4, 2)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::stack_rows({v[0], v[1], v[0]}); },
      {rand(1, 3), rand(2, 3)});
  expect_gradients([](Tape&, const auto& v) { return ad::mean_rows(v[0]); },
                   {rand(5, 3)});
}

TEST_F(AutodiffTest, BlockOperations) {
  expect_gradients(
      [](Tape&, const auto& v) { return ad::block_matmul(v[0], v[1]); },
      {rand(6, 3), rand(6, 2)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::block_row_mean(v[0], 3); },
      {rand(6, 2)});
  expect_gradients(
      [](Tape&, const auto& v) { return ad::weighted_block_mean(v[0], v[1]); },
      {rand(6, 2), rand(2, 3)});
}

TEST_F(AutodiffTest, Reductions) {
  expect_gradients([](Tape&, const auto& v) { return ad::sum(v[0]); },
                   {rand(3, 3)});
  expect_gradients([](Tape&, const auto& v) { return ad::sum_squares(v[0]); },
                   {rand(3, 3)});
}

TEST_F(AutodiffTest, BatchNormTraining) {
  expect_gradients(
      [](Tape&, const auto& v) {
        return ad::batch_norm_train(v[0], v[1], v[2], 1e-5);
      },
      {rand(5, 3), rand(1, 3), rand(1, 3)}, 1e-5);
}

TEST_F(AutodiffTest, BatchNormReportsUnbiasedVariance) {
  Tape tape;
  Matrix x(4, 1);
  x << 1, 2, 3, 6;
  Matrix mean, var;
  const Var y = ad::batch_norm_train(tape.constant(x), tape.constant(Matrix::Ones(1, 1)),
                                     tape.constant(Matrix::Zero(1, 1)), 0.0,
                                     &mean, &var);
  EXPECT_DOUBLE_EQ(mean(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(var(0, 0), 14.0 / 3.0);
  // Normalized with the biased variance 14/4.
  EXPECT_NEAR(y.value()(3, 0), 3.0 / std::sqrt(3.5), 1e-12);
}

TEST_F(AutodiffTest, BatchNormEval) {
  const Matrix mean = rand(1, 3), var = rand(1, 3).cwiseAbs();
  expect_gradients(
      [&](Tape&, const auto& v) {
        return ad::batch_norm_eval(v[0], v[1], v[2], mean, var, 1e-5);
      },
      {rand(4, 3), rand(1, 3), rand(1, 3)});
}

TEST_F(AutodiffTest, BinaryCrossEntropy) {
  Vector labels(4);
  labels << 1, 0, 1, 0;
  expect_gradients(
      [&](Tape&, const auto& v) { return ad::bce_with_logits(v[0], labels); },
      {rand(4, 1)});
  Tape tape;
  Matrix logit(1, 1);
  logit << 0.0;
  Vector one(1);
  one << 1;
  EXPECT_NEAR(ad::bce_with_logits(tape.constant(logit), one).value()(0, 0),
              std::log(2.0), 1e-15);
}

TEST_F(AutodiffTest, ReusedNodeAccumulatesGradient) {
  Tape tape;
  const Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
  const Var y = ad::add(ad::hadamard(x, x), x);  // x^2 + x
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 7.0);
}

TEST_F(AutodiffTest, ConstantsReceiveNoGradient) {
  Tape tape;
  const Var c = tape.constant(rand(2, 2));
  const Var x = tape.leaf(rand(2, 2));
  tape.backward(ad::sum(ad::hadamard(c, x)));
  EXPECT_FALSE(tape.needs_grad(c));
  EXPECT_TRUE(tape.grad(c).isZero());
  EXPECT_TRUE(tape.grad(x).isApprox(c.value()));
}

}  // namespace
}  // namespace sfda
