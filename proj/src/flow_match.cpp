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

#include "flowfill/flow_match.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace flowfill {
namespace {

void require_unit_interval(const char* op, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error(std::string(op) + ": t=" + std::to_string(t) +
                            " outside [0, 1]");
  }
}

Array expand_mask(const CfmItem& item) {
  const std::size_t n = item.x1.rows(), f = item.x1.cols();
  Array mask(Shape{n, f});
  for (std::size_t i = 0; i < n; ++i) {
    if (item.m[i]) std::fill_n(mask.data().data() + i * f, f, 1.0);
  }
  return mask;
}

std::size_t masked_entries(const CfmBatch& batch) {
  std::size_t count = 0;
  for (const CfmItem& item : batch) {
    count += static_cast<std::size_t>(std::count(item.m.begin(), item.m.end(), 1)) *
             item.x1.cols();
  }
  return count;
}

std::size_t all_entries(const CfmBatch& batch) {
  std::size_t count = 0;
  for (const CfmItem& item : batch) count += item.x1.size();
  return count;
}

double normalizer(const CfmBatch& batch, LossFrames frames) {
  const std::size_t count = frames == LossFrames::kMasked ? masked_entries(batch)
                                                          : all_entries(batch);
  if (count == 0) {
    throw std::invalid_argument(frames == LossFrames::kMasked
                                    ? "cfm_loss: masked loss with an all-zero mask"
                                    : "cfm_loss: empty batch");
  }
  return 1.0 / static_cast<double>(count);
}

}  // namespace

OtPath::OtPath(double sigma_min) : sigma_min_(sigma_min) {
  if (!(sigma_min >= 0.0 && sigma_min < 1.0)) {
    throw std::invalid_argument("OtPath: sigma_min must lie in [0, 1)");
  }
}

OtPath::MeanStd OtPath::mean_std(double t, const Array& x1) const {
  require_unit_interval("ot_mean_std", t);
  return {t * x1, (1.0 - t) + sigma_min_ * t};
}

Array OtPath::flow(double t, const Array& x0, const Array& x1) const {
  require_same_shape("conditional_flow", x0, x1);
  const double a = (1.0 - t) + sigma_min_ * t;
  Array out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + t * x1[i];
  return out;
}

Array OtPath::vector_field(double t, const Array& x, const Array& x1) const {
  require_same_shape("conditional_vector_field", x, x1);
  const double denom = (1.0 - t) + sigma_min_ * t;
  if (denom <= 1e-12) {
    throw std::domain_error("conditional_vector_field: singular at t=" + std::to_string(t));
  }
  const double k = 1.0 - sigma_min_;
  Array out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x1[i] - k * x[i]) / denom;
  return out;
}

Array OtPath::regression_target(const Array& x0, const Array& x1) const {
  require_same_shape("cfm_regression_target", x0, x1);
  const double k = 1.0 - sigma_min_;
  Array out(x1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x1[i] - k * x0[i];
  return out;
}

void CfmItem::validate() const {
  if (x1.rank() != 2) throw ShapeError("CfmItem", "x1 must be [N, F]");
  require_same_shape("CfmItem x0", x1, x0);
  require_same_shape("CfmItem x_ctx", x1, x_ctx);
  const std::size_t n = x1.rows(), f = x1.cols();
  if (z.size() != n || m.size() != n) {
    throw ShapeError("CfmItem", "z/m length must equal frame count " + std::to_string(n));
  }
  require_unit_interval("CfmItem", t);
  for (std::size_t i = 0; i < n; ++i) {
    if (m[i] > 1) throw std::invalid_argument("CfmItem: mask values must be 0 or 1");
    if (m[i]) {
      for (std::size_t c = 0; c < f; ++c) {
        if (x_ctx.at(i, c) != 0.0) {
          throw std::invalid_argument("CfmItem: context nonzero at masked frame " +
                                      std::to_string(i));
        }
      }
    }
  }
}

CfmItem make_cfm_item(Array x1, Array x_ctx, std::vector<int> z, std::vector<std::uint8_t> m,
                      Rng& rng) {
  CfmItem item;
  item.t = rng.uniform();
  item.x0 = rng.normal_array(x1.shape());
  item.x1 = std::move(x1);
  item.x_ctx = std::move(x_ctx);
  item.z = std::move(z);
  item.m = std::move(m);
  item.validate();
  return item;
}

Var cfm_loss(Tape& tape, const ConditionalField& model, const CfmBatch& batch,
             const OtPath& path, LossFrames frames) {
  const double inv_count = normalizer(batch, frames);
  std::vector<Var> terms;
  terms.reserve(batch.size());
  for (const CfmItem& item : batch) {
    item.validate();
    const Array w = path.flow(item.t, item.x0, item.x1);
    Var pred = model.forward(tape, w, item.x_ctx, item.z, item.t);
    Var err = square(sub(pred, tape.constant(path.regression_target(item.x0, item.x1))));
    if (frames == LossFrames::kMasked) err = mul(err, tape.constant(expand_mask(item)));
    terms.push_back(sum(err));
  }
  Var total = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) total = add(total, terms[k]);
  return scale(total, inv_count);
}

double cfm_loss_value(const ConditionalField& model, const CfmBatch& batch, const OtPath& path,
                      LossFrames frames) {
  Tape tape;
  return cfm_loss(tape, model, batch, path, frames).value().item();
}

double cfm_loss_of_predictions(const CfmBatch& batch, std::span<const Array> predictions,
                               const OtPath& path, LossFrames frames) {
  if (predictions.size() != batch.size()) {
    throw std::invalid_argument("cfm_loss_of_predictions: one prediction per item required");
  }
  const double inv_count = normalizer(batch, frames);
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const CfmItem& item = batch[k];
    const Array target = path.regression_target(item.x0, item.x1);
    require_same_shape("cfm_loss_of_predictions", target, predictions[k]);
    const std::size_t f = target.cols();
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (frames == LossFrames::kMasked && !item.m[i / f]) continue;
      const double d = predictions[k][i] - target[i];
      total += d * d;
    }
  }
  return total * inv_count;
}

Array cfg_combine(const Array& v_cond, const Array& v_uncond, double alpha) {
  require_same_shape("cfg_combine", v_cond, v_uncond);
  if (alpha == 0.0) return v_cond;
  Array out(v_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 + alpha) * v_cond[i] - alpha * v_uncond[i];
  }
  return out;
}

bool drop_conditioning(CfmItem& item, double p_uncond, Rng& rng, int null_token) {
  if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) {
    throw std::invalid_argument("drop_conditioning: p_uncond must lie in [0, 1]");
  }
  // One uniform per call keeps the stream position independent of the outcome.
  if (!(rng.uniform() < p_uncond)) return false;
  std::fill(item.x_ctx.data().begin(), item.x_ctx.data().end(), 0.0);
  std::fill(item.z.begin(), item.z.end(), null_token);
  return true;
}

std::size_t drop_conditioning(CfmBatch& batch, double p_uncond, Rng& rng, int null_token) {
  std::size_t dropped = 0;
  for (CfmItem& item : batch) dropped += drop_conditioning(item, p_uncond, rng, null_token);
  return dropped;
}

}  // namespace flowfill
