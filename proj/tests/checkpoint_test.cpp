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
#include "sfda/checkpoint.hpp"

#include <cmath>

#include "gradient_check.hpp"
#include "sfda/error.hpp"
#include "test_util.hpp"

namespace sfda {
namespace {

void expect_same(const EncoderParams& a, const EncoderParams& b) {
  std::vector<Matrix> left;
  EncoderParams::each(a, [&](const std::string&, const Matrix& m, TensorRole) {
    left.push_back(m);
  });
  std::size_t i = 0;
  EncoderParams::each(b, [&](const std::string& name, const Matrix& m, TensorRole) {
    EXPECT_EQ(left[i++], m) << name;
  });
}

TEST(Archive, SerializeRoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  Archive a;
  a.set("kind", "encoder");
  a.set("roi_count", "6");
  Matrix special = testing::random_matrix(3, 2, rng);
  special(0, 0) = -0.0;
  special(1, 1) = 1e-310;  // subnormal
  a.put("x", special);
  a.put("y", testing::random_matrix(1, 5, rng));
  const std::string bytes = a.serialize();
  EXPECT_EQ(bytes.rfind("SFDAARC1", 0), 0u);
  const Archive b = Archive::deserialize(bytes);
  EXPECT_EQ(b.serialize(), bytes);
  EXPECT_EQ(b.meta("kind"), "encoder");
  EXPECT_EQ(b.meta_int("roi_count"), 6);
  EXPECT_TRUE(std::signbit(b.get("x")(0, 0)));
  EXPECT_EQ(b.get("x"), special);
  EXPECT_EQ(b.tensors()[1].first, "y");
}

TEST(Archive, MalformedBytesAreSchemaErrors) {
  Archive a;
  a.set("k", "v");
  a.put("t", Matrix::Ones(2, 2));
  const std::string bytes = a.serialize();
  EXPECT_THROW(Archive::deserialize(bytes.substr(0, bytes.size() - 3)), SchemaError);
  EXPECT_THROW(Archive::deserialize(bytes + "x"), SchemaError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Archive::deserialize(bad), SchemaError);
  EXPECT_THROW(a.get("missing"), SchemaError);
  EXPECT_THROW(a.meta("missing"), SchemaError);
  EXPECT_THROW(a.meta_int("k"), SchemaError);
}

TEST(Archive, FileRoundTrip) {
  const auto dir = testing::scratch_dir();
  Archive a;
  a.set("kind", "encoder");
  a.put("t", Matrix::Constant(2, 3, 0.1));
  save_archive(dir / "a.ckpt", a);
  EXPECT_EQ(load_archive(dir / "a.ckpt").serialize(), a.serialize());
  EXPECT_THROW(load_archive(dir / "missing.ckpt"), IoError);
}

TEST(Encoder, StoreRestoreIsBitExact) {
  std::mt19937_64 rng(2);
  const auto p = testing::random_params(rng);
  Archive a;
  store_encoder(a, "branch.1.", p);
  EXPECT_TRUE(a.has("branch.1.gin.0.W"));
  EXPECT_TRUE(a.has("branch.1.se.bn.var"));
  EXPECT_TRUE(a.has("branch.1.head.b"));
  const auto back =
      restore_encoder(Archive::deserialize(a.serialize()), "branch.1.", p.shape);
  expect_same(p, back);
  EXPECT_EQ(back.shape, p.shape);
}

TEST(Encoder, WrongShapeIsSchemaError) {
  std::mt19937_64 rng(3);
  const auto p = testing::random_params(rng);
  Archive a;
  store_encoder(a, "", p);
  EXPECT_THROW(restore_encoder(a, "", {7, 8}), SchemaError);
  EXPECT_THROW(restore_encoder(a, "branch.0.", p.shape), SchemaError);
}

TEST(Adam, StoreRestoreResumesIdentically) {
  std::mt19937_64 rng(4);
  auto p = testing::random_params(rng);
  Adam adam(p);
  auto grads_like = [&](std::uint64_t seed) {
    std::mt19937_64 g(seed);
    EncoderGrads out;
    EncoderParams::each(p, [&](const std::string& name, const Matrix& m, TensorRole) {
      EncoderGrads::each(out, [&](const std::string& other, Matrix& o, TensorRole) {
        if (name == other) o = testing::random_matrix(m.rows(), m.cols(), g);
      });
    });
    return out;
  };
  adam.step(p, grads_like(10), 1e-3);
  adam.step(p, grads_like(11), 1e-3);

  Archive a;
  store_adam(a, "adam.", adam);
  Adam restored = restore_adam(Archive::deserialize(a.serialize()), "adam.", p);
  EXPECT_EQ(restored.steps(), 2);

  auto q = p;
  adam.step(p, grads_like(12), 1e-3);
  restored.step(q, grads_like(12), 1e-3);
  expect_same(p, q);
}

}  // namespace
}  // namespace sfda
