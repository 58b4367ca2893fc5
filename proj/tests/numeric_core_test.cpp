// Copyright 2026 The flowfill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "flowfill/layers.hpp"
#include "flowfill/rng.hpp"
#include "flowfill/tape.hpp"
#include "grad_check.hpp"

namespace flowfill {
namespace {

using testing::check_block;
using testing::uniform_array;

TEST(Philox, KnownAnswerVectors) {
  const auto zero = detail::philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(zero[0], 0x6627e8d5u);
  EXPECT_EQ(zero[1], 0xe169c58du);
  EXPECT_EQ(zero[2], 0xbc57ac4cu);
  EXPECT_EQ(zero[3], 0x9b00dbd8u);
  const auto ones = detail::philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                                          {0xffffffff, 0xffffffff});
  EXPECT_EQ(ones[0], 0x408f276du);
  EXPECT_EQ(ones[1], 0x41c83b0eu);
  EXPECT_EQ(ones[2], 0xa20bc7c6u);
  EXPECT_EQ(ones[3], 0x6d5451fdu);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(42, 1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs |= va != c.next_u64();
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.draws(), 100u);
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(7);
  double s = 0, s2 = 0, n1 = 0, n2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    const double z = rng.normal();
    n1 += z;
    n2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.5, 0.01);
  EXPECT_NEAR(n1 / n, 0.0, 0.03);
  EXPECT_NEAR(n2 / n, 1.0, 0.04);
  for (int i = 0; i < 1000; ++i) ASSERT_LT(rng.below(7), 7u);
}

TEST(Primitives, TrivialExamples) {
  Tape tape;
  Var a = tape.constant(Array::matrix({{1, 2}, {3, 4}}));
  Var eye = tape.constant(Array::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(matmul(a, eye).value(), Array::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(add(tape.constant(Array::vector({1, 2})), tape.constant(Array::vector({3, 4}))).value(),
            Array::vector({4, 6}));
  const Array s = softmax(tape.constant(Array::vector({0, 0}))).value();
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Primitives, ShapeErrorNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Array(Shape{2, 3}));
  Var b = tape.constant(Array(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(a, tape.constant(Array(Shape{3, 2}))), ShapeError);
}

TEST(Primitives, GatherRejectsUnknownId) {
  Tape tape;
  Var table = tape.constant(Array(Shape{4, 2}));
  const std::vector<int> ids = {0, 4};
  EXPECT_THROW(gather(table, ids), std::out_of_range);
}

TEST(Backward, SumOfSquares) {
  Parameter p{"p", Array::vector({1, 2, 3})};
  Tape tape;
  Var v = tape.watch(p);
  Gradients g = tape.backward(sum(mul(v, v)));
  EXPECT_EQ(g[p], Array::vector({2, 4, 6}));
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  Parameter p{"p", Array::vector({1, 2})};
  Tape tape;
  tape.watch(p);
  Gradients g = tape.backward(sum(tape.constant(Array::vector({5, 6}))));
  EXPECT_EQ(g[p], Array::vector({0, 0}));
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Var v = tape.input(Array::vector({1, 2}));
  EXPECT_THROW(tape.backward(v), std::invalid_argument);
}

TEST(Backward, LinearInLoss) {
  Rng rng(3);
  Parameter w{"w", uniform_array({3, 4}, rng)};
  const Array x = uniform_array({2, 3}, rng);
  auto grads_of = [&](double a, double b) {
    Tape tape;
    Var y = matmul(tape.constant(x), tape.watch(w));
    Var l1 = sum(tanh(y));
    Var l2 = sum(square(y));
    return tape.backward(add(scale(l1, a), scale(l2, b)))[w];
  };
  const Array g1 = grads_of(1, 0), g2 = grads_of(0, 1), g = grads_of(0.3, -1.7);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g[i], 0.3 * g1[i] - 1.7 * g2[i], 1e-12);
  }
}

TEST(Backward, MatmulChainMatchesFiniteDifferences) {
  Rng rng(11);
  Parameter a{"a", uniform_array({3, 4}, rng)};
  Parameter b{"b", uniform_array({4, 2}, rng)};
  auto build = [&](Tape& tape, const Var& x) {
    return tanh(matmul(matmul(x, tape.watch(a)), tape.watch(b)));
  };
  const auto r = check_block(build, {&a, &b}, uniform_array({5, 3}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

class BlockGradient : public ::testing::Test {
 protected:
  Rng rng{2024};
};

TEST_F(BlockGradient, Linear) {
  Linear layer("lin", 5, 3, true, rng);
  ParameterList params;
  layer.collect(params);
  auto r = check_block([&](Tape& t, const Var& x) { return layer(t, x); }, params,
                       uniform_array({4, 5}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST_F(BlockGradient, LayerNorm) {
  LayerNorm norm("ln", 6);
  ParameterList params;
  norm.collect(params);
  for (Parameter* p : params) p->value = uniform_array(p->value.shape(), rng);
  auto r = check_block([&](Tape& t, const Var& x) { return norm(t, x); }, params,
                       uniform_array({3, 6}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST_F(BlockGradient, Embedding) {
  Embedding emb("emb", 7, 4, rng);
  ParameterList params;
  emb.collect(params);
  const std::vector<int> ids = {1, 3, 3, 6, 0};
  auto r = check_block([&](Tape& t, const Var& x) { return mul(emb(t, ids), x); }, params,
                       uniform_array({5, 4}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST_F(BlockGradient, SelfAttention) {
  SelfAttention attn("attn", 8, 2, rng);
  ParameterList params;
  attn.collect(params);
  auto r = check_block([&](Tape& t, const Var& x) { return attn(t, x); }, params,
                       uniform_array({5, 8}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST_F(BlockGradient, FeedForward) {
  FeedForward ffn("ffn", 6, 10, rng);
  ParameterList params;
  ffn.collect(params);
  auto r = check_block([&](Tape& t, const Var& x) { return ffn(t, x); }, params,
                       uniform_array({4, 6}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST_F(BlockGradient, TransformerBlock) {
  TransformerBlock block("blk", 8, 2, 12, rng);
  ParameterList params;
  block.collect(params);
  auto r = check_block([&](Tape& t, const Var& x) { return block(t, x); }, params,
                       uniform_array({5, 8}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST_F(BlockGradient, ConcatSliceGelu) {
  Parameter p{"p", uniform_array({3, 2}, rng)};
  auto build = [&](Tape& t, const Var& x) {
    const Var parts[] = {x, t.watch(p)};
    Var c = concat_cols(parts);
    const Var rows[] = {c, slice_rows(c, 1, 2)};
    return gelu(slice_cols(concat_rows(rows), 1, 3));
  };
  auto r = check_block(build, {&p}, uniform_array({3, 4}, rng), rng);
  EXPECT_LT(r.worst_rel_error, 1e-4) << r.worst_name;
}

TEST(Sinusoid, ZeroTimeAlternates) {
  const Array e = sinusoidal_embed(0.0, 8);
  for (std::size_t i = 0; i < 8; i += 2) {
    EXPECT_EQ(e[i], 0.0);
    EXPECT_EQ(e[i + 1], 1.0);
  }
  EXPECT_GT(l2_norm(sinusoidal_embed(1.0, 8) - e), 0.0);
  EXPECT_THROW(sinusoidal_embed(0.5, 7), std::invalid_argument);
}

TEST(Sinusoid, MatchesHandTable) {
  // 1000 t scaling, frequencies 10000^(-i/4) for dim 8.
  const double t = 0.5;
  const double freqs[] = {1.0, 0.1, 0.01, 0.001};
  const Array e = sinusoidal_embed(t, 8);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(e[2 * i], std::sin(500.0 * freqs[i]), 1e-12);
    EXPECT_NEAR(e[2 * i + 1], std::cos(500.0 * freqs[i]), 1e-12);
  }
}

TEST(Sinusoid, DistinctOnFineGrid) {
  std::vector<Array> seen;
  for (int k = 0; k <= 1000; ++k) seen.push_back(sinusoidal_embed(k / 1000.0, 16));
  for (std::size_t k = 1; k < seen.size(); ++k) EXPECT_GT(l2_norm(seen[k] - seen[k - 1]), 1e-6);
}

TEST(Optim, ClipAndScheduleAndDeterminism) {
  auto run = [] {
    Rng rng(5);
    Linear layer("lin", 4, 2, true, rng);
    ParameterList params;
    layer.collect(params);
    Adam adam;
    LinearWarmupDecay sched{1e-2, 2, 10};
    std::vector<double> norms;
    for (std::size_t step = 0; step < 10; ++step) {
      Tape tape;
      Var y = layer(tape, tape.constant(uniform_array({3, 4}, rng)));
      Gradients g = tape.backward(sum(square(y)));
      norms.push_back(clip_grad_norm(g, 0.2));
      adam.step(params, g, sched.at(step));
    }
    return std::make_pair(params[0]->value, norms);
  };
  const auto [w1, n1] = run();
  const auto [w2, n2] = run();
  EXPECT_TRUE(bitwise_equal(w1, w2));
  for (double n : n1) EXPECT_LE(n, 0.2 + 1e-9);
  LinearWarmupDecay sched{1.0, 4, 12};
  EXPECT_DOUBLE_EQ(sched.at(3), 1.0);
  EXPECT_LT(sched.at(0), sched.at(1));
  EXPECT_GT(sched.at(5), sched.at(10));
}

}  // namespace
}  // namespace flowfill
