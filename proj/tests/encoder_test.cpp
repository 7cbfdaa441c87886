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

#include <algorithm>
#include <cmath>

#include "gradient_check.hpp"
#include "sfda/error.hpp"
#include "test_util.hpp"

namespace sfda {
namespace {

const ForwardOptions kLinear{.disable_norm = true, .identity_activation = true};

GinTensors<Matrix> gin(const Matrix& w, double eps) {
  GinTensors<Matrix> layer;
  layer.weight = w;
  layer.epsilon = Matrix::Constant(1, 1, eps);
  const auto c = w.cols();
  layer.norm = {Matrix::Ones(1, c), Matrix::Zero(1, c), Matrix::Zero(1, c),
                Matrix::Ones(1, c)};
  return layer;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

TEST(Initialize, ShapesAndDefaults) {
  std::mt19937_64 rng(1);
  const auto p = EncoderParams::initialize({10, 64}, rng);
  EXPECT_EQ(p.gin[0].weight.rows(), 10);
  EXPECT_EQ(p.gin[0].weight.cols(), 32);
  EXPECT_EQ(p.gin[1].weight.rows(), 32);
  EXPECT_EQ(p.gin[1].weight.cols(), 32);
  EXPECT_EQ(p.se_w1.rows(), 64);
  EXPECT_EQ(p.se_w2.rows(), 10);
  EXPECT_EQ(p.se_w2.cols(), 64);
  EXPECT_EQ(p.head_w.cols(), 64);
  for (const auto& layer : p.gin) {
    EXPECT_EQ(layer.epsilon(0, 0), 0.0);
    EXPECT_TRUE(layer.norm.running_var.isOnes(0.0));
    EXPECT_TRUE(layer.norm.running_mean.isZero(0.0));
  }
  EXPECT_TRUE(p.all_finite());
  const double bound = 1.0 / std::sqrt(64.0);
  EXPECT_LE(p.se_w1.cwiseAbs().maxCoeff(), bound);
}

TEST(Gin, ZeroGraphZeroEpsilonGivesZero) {
  std::mt19937_64 rng(2);
  const Matrix h = testing::random_matrix(5, 3, rng);
  const Matrix out = gin_layer_forward(h, Matrix::Zero(5, 5),
                                       gin(testing::random_matrix(3, 4, rng), 0.0),
                                       {.disable_norm = true});
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Gin, SelfLoopWithIdentityWeightsIsIdentity) {
  std::mt19937_64 rng(3);
  const Matrix h = testing::random_matrix(5, 4, rng);
  const Matrix out =
      gin_layer_forward(h, Matrix::Zero(5, 5), gin(Matrix::Identity(4, 4), 1.0), kLinear);
  EXPECT_LE((out - h).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gin, TwoNodesSwapFeatures) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const Matrix out = gin_layer_forward(Matrix::Identity(2, 2), a,
                                       gin(Matrix::Identity(2, 2), 0.0), kLinear);
  EXPECT_EQ(out, a);
}

TEST(Gin, NodePermutationEquivariance) {
  std::mt19937_64 rng(4);
  const auto graphs = testing::random_graphs(rng, 1, 7);
  const Matrix& a = graphs[0].adjacency;
  const auto layer = gin(testing::random_matrix(7, 4, rng), 0.3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 7, rng);
  const Matrix pa = perm * a * perm.transpose();
  const Matrix ph = perm * Matrix::Identity(7, 7);
  const ForwardOptions opts{.disable_norm = true};
  const Matrix base = gin_layer_forward(Matrix::Identity(7, 7), a, layer, opts);
  const Matrix permuted = gin_layer_forward(ph, pa, layer, opts);
  EXPECT_LE((permuted - perm * base).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gin, ShapeMismatchThrows) {
  EXPECT_THROW(gin_layer_forward(Matrix::Identity(3, 3), Matrix::Zero(4, 4),
                                 gin(Matrix::Identity(3, 3), 0), kLinear),
               ContractError);
}

TEST(Spatial, ZeroSecondWeightGivesHalf) {
  std::mt19937_64 rng(5);
  auto p = testing::random_params(rng);
  p.se_w2.setZero();
  const auto s = spatial_attention(testing::random_matrix(6, 8, rng), p, {});
  EXPECT_TRUE((s.scores.array() == 0.5).all());
}

TEST(Spatial, ScoresInOpenUnitInterval) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testing::random_params(rng);
    const auto s = spatial_attention(testing::random_matrix(6, 8, rng, 3.0), p, {});
    EXPECT_GT(s.scores.minCoeff(), 0.0);
    EXPECT_LT(s.scores.maxCoeff(), 1.0);
  }
}

TEST(Spatial, UnitScoresGivePlainNodeMean) {
  std::mt19937_64 rng(7);
  const auto p = testing::random_params(rng);
  const Matrix h = testing::random_matrix(6, 8, rng);
  const auto s = spatial_attention(h, p, {.unit_spatial_attention = true});
  EXPECT_LE((s.embedding - h.colwise().mean().transpose()).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(Spatial, EmbeddingIsScoreWeightedMean) {
  std::mt19937_64 rng(8);
  const auto p = testing::random_params(rng);
  const Matrix h = testing::random_matrix(6, 8, rng);
  const auto s = spatial_attention(h, p, {});
  const Vector expected = (s.scores.asDiagonal() * h).colwise().mean().transpose();
  EXPECT_LE((s.embedding - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Temporal, SingleWindow) {
  std::mt19937_64 rng(9);
  const auto p = testing::random_params(rng);
  const Matrix x = testing::random_matrix(1, 8, rng);
  const auto t = temporal_attention(x, p, {});
  ASSERT_EQ(t.weights.rows(), 1);
  EXPECT_DOUBLE_EQ(t.weights(0, 0), 1.0);
  const Matrix v = x * p.phi3_w + p.phi3_b;
  const Matrix expected = (v * p.mlp_w + p.mlp_b).unaryExpr(&gelu);
  EXPECT_LE((t.output - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Temporal, ConstantKeysGiveUniformWeights) {
  std::mt19937_64 rng(10);
  auto p = testing::random_params(rng);
  p.phi2_w.setZero();
  const auto t = temporal_attention(testing::random_matrix(4, 8, rng), p, {});
  EXPECT_LE((t.weights.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Temporal, RowsSumToOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testing::random_params(rng);
    const auto t = temporal_attention(testing::random_matrix(5, 8, rng, 4.0), p, {});
    EXPECT_LE((t.weights.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-7);
  }
}

TEST(Subject, IdenticalWindowsMatchSingleWindow) {
  std::mt19937_64 rng(12);
  const auto p = testing::random_params(rng);
  const auto one = testing::random_graphs(rng, 1);
  GraphSequence three(3, one[0]);
  const auto a = encode_subject(one, p);
  const auto b = encode_subject(three, p);
  EXPECT_LE((a.features - b.features).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(a.logit, b.logit, 1e-12);
}

TEST(Subject, ZeroHeadWeightGivesBias) {
  std::mt19937_64 rng(13);
  auto p = testing::random_params(rng);
  p.head_w.setZero();
  p.head_b(0, 0) = -0.375;
  EXPECT_EQ(encode_subject(testing::random_graphs(rng), p).logit, -0.375);
}

TEST(Subject, GoldenLogit) {
  std::mt19937_64 rng(2026);
  const auto p = EncoderParams::initialize({6, 8}, rng);
  const auto graphs = testing::random_graphs(rng);
  const auto out = encode_subject(graphs, p);
  EXPECT_NEAR(out.logit, -0.41083771017437021, 1e-10);
}

TEST(Subject, WindowOrderInvariance) {
  std::mt19937_64 rng(14);
  const auto p = testing::random_params(rng);
  auto graphs = testing::random_graphs(rng, 5);
  const double base = encode_subject(graphs, p).logit;
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(graphs.begin(), graphs.end(), rng);
    EXPECT_NEAR(encode_subject(graphs, p).logit, base, 1e-8);
  }
}

TEST(Subject, BatchedEncodingMatchesPerSubject) {
  std::mt19937_64 rng(15);
  const auto p = testing::random_params(rng);
  std::vector<GraphSequence> subjects;
  for (int s = 0; s < 4; ++s) subjects.push_back(testing::random_graphs(rng, 1 + s));
  std::vector<const GraphSequence*> ptrs;
  for (const auto& s : subjects) ptrs.push_back(&s);
  const auto many = encode_many(ptrs, p);
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto one = encode_subject(subjects[s], p);
    EXPECT_LE((one.features - many[s].features).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(one.logit, many[s].logit, 1e-12);
    EXPECT_LE((one.attention - many[s].attention).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Subject, FiniteOutputsOnRandomGraphs) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testing::random_params(rng, 12, 16);
    const auto out = encode_subject(testing::random_graphs(rng, 3, 12), p);
    EXPECT_TRUE(out.features.allFinite());
    EXPECT_TRUE(std::isfinite(out.logit));
    EXPECT_GT(out.attention.minCoeff(), 0.0);
    EXPECT_LT(out.attention.maxCoeff(), 1.0);
  }
}

TEST(Subject, EmptySequenceThrows) {
  std::mt19937_64 rng(17);
  const auto p = testing::random_params(rng);
  EXPECT_THROW(encode_subject({}, p), ContractError);
}

TEST(Probability, StableSigmoid) {
  EXPECT_EQ(predict_probability(0.0), 0.5);
  EXPECT_GE(predict_probability(50.0), 1.0 - 1e-20);
  EXPECT_NEAR(predict_probability(std::log(3.0)), 0.75, 1e-15);
  EXPECT_EQ(predict_probability(-1000.0), 0.0);
  EXPECT_EQ(predict_probability(1000.0), 1.0);
}

TEST(RunningStats, ExponentialUpdate) {
  std::mt19937_64 rng(18);
  auto p = testing::random_params(rng);
  const auto before = p;
  NormBatchStats stats;
  for (int i = 0; i < 3; ++i) {
    const int c = i < 2 ? 4 : 8;
    stats.mean.push_back(Matrix::Constant(1, c, 2.0));
    stats.var.push_back(Matrix::Constant(1, c, 3.0));
  }
  update_running_stats(p, stats, 0.1);
  const Matrix expected_mean =
      0.9 * before.se_norm.running_mean.array() + 0.2;
  EXPECT_LE((p.se_norm.running_mean - expected_mean).cwiseAbs().maxCoeff(), 1e-15);
  const Matrix expected_var =
      0.9 * before.gin[0].norm.running_var.array() + 0.3;
  EXPECT_LE((p.gin[0].norm.running_var - expected_var).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gradients, LossesThroughFullEncoder) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto problem = testing::tiny_problem(seed, 3);
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      const auto bce = testing::check_gradients(
          {problem.branches[0]}, testing::bce_objective(problem, mode));
      EXPECT_LT(bce.max_relative_error, 1e-4) << seed;
      const auto mc = testing::check_gradients(
          problem.branches, testing::consistency_objective(problem, mode));
      EXPECT_LT(mc.max_relative_error, 1e-4) << seed;
    }
  }
}

}  // namespace
}  // namespace sfda
