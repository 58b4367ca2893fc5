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

#include "flowfill/duration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowfill {
namespace {

void require_lengths(std::span<const int> phones, std::size_t a, std::size_t b,
                     const char* op) {
  if (phones.size() != a || phones.size() != b) {
    throw ShapeError(op, std::to_string(phones.size()) + " phones, " + std::to_string(a) +
                             " and " + std::to_string(b) + " entries");
  }
}

Array column(std::span<const double> values) {
  return Array(Shape{values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> transformed_context(std::span<const int> l_ctx,
                                        std::span<const std::uint8_t> mask) {
  std::vector<double> out(l_ctx.size(), 0.0);
  for (std::size_t j = 0; j < l_ctx.size(); ++j) {
    if (!mask[j]) out[j] = duration_forward_transform(l_ctx[j]);
  }
  return out;
}

}  // namespace

double duration_forward_transform(int l, Rng* rng) {
  if (l < 0) throw std::invalid_argument("duration_forward_transform: negative duration");
  double x = static_cast<double>(l);
  if (rng) x += rng->uniform(-0.5, 0.5);
  return std::log1p(x);
}

std::vector<double> duration_forward_transform(std::span<const int> l, Rng* rng) {
  std::vector<double> out;
  out.reserve(l.size());
  for (int v : l) out.push_back(duration_forward_transform(v, rng));
  return out;
}

int duration_inverse_transform(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("duration_inverse_transform: non-finite");
  const double l = std::round(std::expm1(std::min(v, 20.0)));
  return l < 0.0 ? 0 : static_cast<int>(l);
}

std::string to_string(DurationMode mode) {
  return mode == DurationMode::kRegression ? "regression" : "flow";
}

DurationMode duration_mode_from_string(const std::string& name) {
  if (name == "regression") return DurationMode::kRegression;
  if (name == "flow") return DurationMode::kFlow;
  throw std::invalid_argument("unknown duration mode '" + name + "'");
}

void DurationNetConfig::validate() const {
  if (vocab == 0 || phone_dim == 0 || width == 0 || ffn_width == 0 || layers == 0) {
    throw std::invalid_argument("DurationNetConfig: sizes must be positive");
  }
  if (heads == 0 || width % heads != 0 || width % 2 != 0) {
    throw std::invalid_argument("DurationNetConfig: width must be even and divisible by heads");
  }
}

void DurationItem::validate() const {
  if (target.size() != phones.size() || context.size() != phones.size() ||
      mask.size() != phones.size()) {
    throw ShapeError("DurationItem", "phones, target, context and mask lengths differ");
  }
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j] && context[j] != 0.0) {
      throw std::invalid_argument("DurationItem: context nonzero at masked phone " +
                                  std::to_string(j));
    }
  }
}

DurationItem make_duration_item(std::span<const int> phones, std::span<const int> durations,
                                std::vector<std::uint8_t> mask, Rng* rng) {
  require_lengths(phones, durations.size(), mask.size(), "make_duration_item");
  DurationItem item;
  item.phones.assign(phones.begin(), phones.end());
  item.target = duration_forward_transform(durations, rng);
  item.context.resize(phones.size(), 0.0);
  for (std::size_t j = 0; j < phones.size(); ++j) {
    if (!mask[j]) item.context[j] = item.target[j];
  }
  item.mask = std::move(mask);
  return item;
}

DurationModel::DurationModel(const DurationNetConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  if (config.mode == DurationMode::kRegression) {
    phone_lookup_ = Embedding("dur.phone_lookup", config.vocab, config.phone_dim, rng);
    input_projection_ =
        Linear("dur.input_projection", 1 + config.phone_dim, config.width, false, rng);
    stack_ = FieldTransformer("dur.stack", config.width, config.layers, config.heads,
                              config.ffn_width, false, false, 0, rng);
    output_projection_ = Linear("dur.output_projection", config.width, 1, true, rng);
  } else {
    AudioNetConfig net;
    net.features = 1;
    net.vocab = config.vocab;
    net.phone_dim = config.phone_dim;
    net.width = config.width;
    net.layers = config.layers;
    net.heads = config.heads;
    net.ffn_width = config.ffn_width;
    net.skip_connections = config.layers % 2 == 0;
    field_ = std::make_unique<AudioVectorField>(net, rng);
  }
}

Var DurationModel::regress(Tape& tape, std::span<const int> phones,
                           std::span<const double> context) const {
  if (config_.mode != DurationMode::kRegression) {
    throw std::logic_error("DurationModel: regress() on a flow-mode model");
  }
  if (context.size() != phones.size()) {
    throw ShapeError("DurationModel::regress", "context length differs from phone count");
  }
  Array ctx = column(context);
  if (!config_.use_context) ctx = Array::zeros_like(ctx);
  const Var parts[] = {tape.constant(std::move(ctx)), phone_lookup_(tape, phones)};
  Var x = input_projection_(tape, concat_cols(parts));
  return output_projection_(tape, stack_(tape, x, std::nullopt));
}

const AudioVectorField& DurationModel::field() const {
  if (!field_) throw std::logic_error("DurationModel: field() on a regression-mode model");
  return *field_;
}

ParameterList DurationModel::parameters() {
  if (field_) return field_->parameters();
  ParameterList out;
  phone_lookup_.collect(out);
  input_projection_.collect(out);
  stack_.collect(out);
  output_projection_.collect(out);
  return out;
}

ConstParameterList DurationModel::parameters() const {
  if (field_) return std::as_const(*field_).parameters();
  ConstParameterList out;
  phone_lookup_.collect(out);
  input_projection_.collect(out);
  stack_.collect(out);
  output_projection_.collect(out);
  return out;
}

Var loss_duration_regression(Tape& tape, const DurationModel& model,
                             std::span<const DurationItem> batch) {
  std::size_t masked = 0;
  for (const DurationItem& item : batch) {
    item.validate();
    masked += static_cast<std::size_t>(std::count(item.mask.begin(), item.mask.end(), 1));
  }
  if (masked == 0) throw std::invalid_argument("loss_duration_regression: no masked phones");
  Var total;
  for (const DurationItem& item : batch) {
    Var pred = model.regress(tape, item.phones, item.context);
    std::vector<double> m(item.mask.begin(), item.mask.end());
    Var err = mul(abs(sub(pred, tape.constant(column(item.target)))), tape.constant(column(m)));
    total = total.valid() ? add(total, sum(err)) : sum(err);
  }
  return scale(total, 1.0 / static_cast<double>(masked));
}

CfmBatch duration_cfm_batch(std::span<const DurationItem> batch, Rng& rng) {
  CfmBatch out;
  for (const DurationItem& item : batch) {
    item.validate();
    out.push_back(make_cfm_item(column(item.target), column(item.context), item.phones,
                                item.mask, rng));
  }
  return out;
}

Var loss_duration_cfm(Tape& tape, const DurationModel& model, std::span<const DurationItem> batch,
                      const OtPath& path, Rng& rng) {
  return cfm_loss(tape, model.field(), duration_cfm_batch(batch, rng), path, LossFrames::kMasked);
}

std::vector<int> predict_durations(const DurationModel& model, std::span<const int> phones,
                                   std::span<const int> l_ctx,
                                   std::span<const std::uint8_t> mask, DurationMode mode,
                                   const SolverConfig& solver, Rng& rng) {
  require_lengths(phones, l_ctx.size(), mask.size(), "predict_durations");
  if (mode != model.mode()) {
    throw std::invalid_argument("predict_durations: requested " + to_string(mode) +
                                " mode from a " + to_string(model.mode()) + " model");
  }
  std::vector<int> out(l_ctx.begin(), l_ctx.end());
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) return out;
  const std::vector<double> context = transformed_context(l_ctx, mask);

  Array values;
  if (mode == DurationMode::kRegression) {
    Tape tape;
    values = model.regress(tape, phones, context).value();
  } else {
    const Array x0 = rng.normal_array({phones.size(), 1});
    values = solve_guided(model.field(), column(context), phones, x0, solver).endpoint;
  }
  for (std::size_t j = 0; j < phones.size(); ++j) {
    if (mask[j]) out[j] = duration_inverse_transform(values[j]);
  }
  return out;
}

std::vector<double> point_estimate_durations(const DurationModel& model,
                                             std::span<const int> phones,
                                             std::span<const int> l_ctx,
                                             std::span<const std::uint8_t> mask,
                                             const SolverConfig& solver, Rng& rng,
                                             std::size_t samples) {
  const std::size_t draws = model.mode() == DurationMode::kRegression ? 1 : samples;
  if (draws == 0) throw std::invalid_argument("point_estimate_durations: zero samples");
  std::vector<double> mean(phones.size(), 0.0);
  for (std::size_t s = 0; s < draws; ++s) {
    const auto l = predict_durations(model, phones, l_ctx, mask, model.mode(), solver, rng);
    for (std::size_t j = 0; j < l.size(); ++j) mean[j] += l[j];
  }
  for (double& v : mean) v /= static_cast<double>(draws);
  return mean;
}

}  // namespace flowfill
