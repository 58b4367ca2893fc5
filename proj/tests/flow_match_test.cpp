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

#include "flowfill/flow_match.hpp"

namespace flowfill {
namespace {

// Field that returns a fixed array regardless of its inputs, or a learnable
// per-feature gain on w when gain is set.
class FixedField : public ConditionalField {
 public:
  explicit FixedField(Array output) : output_(std::move(output)) {}
  Var forward(Tape& tape, const Array&, const Array&, std::span<const int>,
              double) const override {
    return tape.constant(output_);
  }
  int null_token() const override { return 0; }

 private:
  Array output_;
};

CfmItem one_frame_item(double x1, double x0, std::uint8_t masked) {
  CfmItem item;
  item.x1 = Array(Shape{1, 1}, {x1});
  item.x0 = Array(Shape{1, 1}, {x0});
  item.t = 0.3;
  item.x_ctx = Array(Shape{1, 1}, {masked ? 0.0 : x1});
  item.z = {1};
  item.m = {masked};
  return item;
}

TEST(OtPath, MeanStdExamples) {
  OtPath path;
  const Array x1 = Array::vector({1.5, -2.0});
  auto start = path.mean_std(0.0, x1);
  EXPECT_EQ(start.mean, Array::vector({0.0, -0.0}));
  EXPECT_EQ(start.std, 1.0);
  auto end = path.mean_std(1.0, x1);
  EXPECT_EQ(end.mean, x1);
  EXPECT_DOUBLE_EQ(end.std, 1e-5);
  auto mid = OtPath(0.0).mean_std(0.5, Array::scalar(2.0));
  EXPECT_DOUBLE_EQ(mid.mean.item(), 1.0);
  EXPECT_DOUBLE_EQ(mid.std, 0.5);
  EXPECT_THROW(path.mean_std(1.5, x1), std::domain_error);
  EXPECT_THROW(path.mean_std(-0.1, x1), std::domain_error);
  EXPECT_THROW(OtPath(1.0), std::invalid_argument);
}

TEST(OtPath, FlowExamples) {
  OtPath path;
  const Array x0 = Array::scalar(3.0), x1 = Array::scalar(-1.0);
  EXPECT_EQ(path.flow(0.0, x0, x1), x0);
  EXPECT_NEAR(path.flow(1.0, x0, x1).item(), -0.99997, 1e-15);
  EXPECT_DOUBLE_EQ(OtPath(0.0).flow(0.5, Array::scalar(0), Array::scalar(2)).item(), 1.0);
  EXPECT_THROW(path.flow(0.5, Array::vector({1, 2}), Array::vector({1})), ShapeError);
}

TEST(OtPath, EndpointLawIsExact) {
  OtPath path;
  Rng rng(1);
  const Array x0 = rng.normal_array({4, 3}), x1 = rng.normal_array({4, 3});
  const Array w = path.flow(1.0, x0, x1);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w[i], 1e-5 * x0[i] + x1[i]);
}

TEST(OtPath, VectorFieldExamples) {
  OtPath path;
  const Array x0 = Array::vector({0.7, -1.2}), x1 = Array::vector({2.0, 0.5});
  EXPECT_EQ(path.vector_field(0.0, x0, x1), path.regression_target(x0, x1));
  EXPECT_DOUBLE_EQ(OtPath(0.0).vector_field(0.5, Array::scalar(1), Array::scalar(2)).item(), 2.0);
  EXPECT_THROW(OtPath(0.0).vector_field(1.0, x0, x1), std::domain_error);
}

TEST(OtPath, FieldIsTimeDerivativeOfFlow) {
  OtPath path;
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const double t = rng.uniform(0.0, 0.99);
    const Array x0 = rng.normal_array({3}), x1 = rng.normal_array({3});
    const double h = 1e-6;
    const Array deriv = (1.0 / (2 * h)) * (path.flow(t + h, x0, x1) - path.flow(t - h, x0, x1));
    const Array u = path.vector_field(t, path.flow(t, x0, x1), x1);
    EXPECT_LT(max_abs_diff(deriv, u) / std::max(l2_norm(u), 1e-12), 1e-6);
  }
}

TEST(OtPath, RegressionTargetExamples) {
  EXPECT_DOUBLE_EQ(OtPath(0.0).regression_target(Array::scalar(1), Array::scalar(3)).item(), 2.0);
  EXPECT_NEAR(OtPath().regression_target(Array::scalar(1), Array::scalar(3)).item(), 2.00001,
              1e-15);
  const double k = 1.0 - 1e-5;
  const Array x1 = Array::vector({3.0, -2.0});
  const Array x0 = Array::vector({3.0 / k, -2.0 / k});
  EXPECT_LT(l2_norm(OtPath().regression_target(x0, x1)), 1e-15);
}

TEST(CfmLoss, ZeroAtExactSolution) {
  OtPath path;
  Rng rng(4);
  CfmItem item;
  item.x1 = rng.normal_array({3, 2});
  item.x0 = rng.normal_array({3, 2});
  item.t = 0.4;
  item.m = {1, 0, 1};
  item.x_ctx = item.x1;
  for (std::size_t c = 0; c < 2; ++c) item.x_ctx.at(0, c) = item.x_ctx.at(2, c) = 0.0;
  item.z = {1, 2, 3};
  FixedField exact(path.regression_target(item.x0, item.x1));
  EXPECT_EQ(cfm_loss_value(exact, {item}, path, LossFrames::kAll), 0.0);
  EXPECT_EQ(cfm_loss_value(exact, {item}, path, LossFrames::kMasked), 0.0);
}

TEST(CfmLoss, OneFrameSquaredError) {
  OtPath path(0.0);
  // target = x1 - x0 = 2, prediction 0.
  FixedField zero(Array(Shape{1, 1}, {0.0}));
  EXPECT_DOUBLE_EQ(cfm_loss_value(zero, {one_frame_item(2.0, 0.0, 1)}, path, LossFrames::kMasked),
                   4.0);
}

TEST(CfmLoss, FullMaskEqualsAllFrames) {
  OtPath path;
  Rng rng(6);
  CfmItem item;
  item.x1 = rng.normal_array({4, 3});
  item.x0 = rng.normal_array({4, 3});
  item.t = 0.8;
  item.m = {1, 1, 1, 1};
  item.x_ctx = Array(Shape{4, 3});
  item.z = {0, 0, 0, 0};
  FixedField field(rng.normal_array({4, 3}));
  EXPECT_EQ(cfm_loss_value(field, {item}, path, LossFrames::kMasked),
            cfm_loss_value(field, {item}, path, LossFrames::kAll));
}

TEST(CfmLoss, MaskedIgnoresUnmaskedErrorsAndNeedsMask) {
  OtPath path(0.0);
  CfmBatch batch = {one_frame_item(2.0, 0.0, 0)};
  FixedField zero(Array(Shape{1, 1}, {0.0}));
  EXPECT_THROW(cfm_loss_value(zero, batch, path, LossFrames::kMasked), std::invalid_argument);
  EXPECT_DOUBLE_EQ(cfm_loss_value(zero, batch, path, LossFrames::kAll), 4.0);
  const Array preds[] = {Array(Shape{1, 1}, {0.0})};
  EXPECT_DOUBLE_EQ(cfm_loss_of_predictions(batch, preds, path, LossFrames::kAll), 4.0);
}

TEST(CfmItem, ContextMustBeZeroUnderMask) {
  CfmItem item = one_frame_item(2.0, 0.0, 1);
  item.x_ctx[0] = 1.0;
  EXPECT_THROW(item.validate(), std::invalid_argument);
}

TEST(Cfg, Identities) {
  Rng rng(2);
  const Array vc = rng.normal_array({5}), vu = rng.normal_array({5});
  EXPECT_TRUE(bitwise_equal(cfg_combine(vc, vu, 0.0), vc));
  const Array same = cfg_combine(vc, vc, 3.7);
  EXPECT_LT(max_abs_diff(same, vc), 1e-12);
  EXPECT_DOUBLE_EQ(cfg_combine(Array::scalar(1), Array::scalar(0), 0.7).item(), 1.7);
  // Affine in alpha.
  const Array a = cfg_combine(vc, vu, 0.2), b = cfg_combine(vc, vu, 0.6);
  const Array c = cfg_combine(vc, vu, 1.0);
  EXPECT_LT(max_abs_diff(b - a, c - b), 1e-12);
}

TEST(DropConditioning, RatesAndEffect) {
  Rng rng(10);
  CfmItem base = one_frame_item(1.5, 0.0, 0);
  for (int i = 0; i < 50; ++i) {
    CfmItem item = base;
    EXPECT_FALSE(drop_conditioning(item, 0.0, rng, 0));
    EXPECT_EQ(item.x_ctx, base.x_ctx);
    EXPECT_TRUE(drop_conditioning(item, 1.0, rng, 0));
    EXPECT_EQ(item.x_ctx[0], 0.0);
    EXPECT_EQ(item.z[0], 0);
  }
  int dropped = 0;
  for (int i = 0; i < 10000; ++i) {
    CfmItem item = base;
    dropped += drop_conditioning(item, 0.2, rng, 0);
  }
  EXPECT_GE(dropped, 1900);
  EXPECT_LE(dropped, 2100);
  EXPECT_THROW(drop_conditioning(base, 1.5, rng, 0), std::invalid_argument);
}

}  // namespace
}  // namespace flowfill
