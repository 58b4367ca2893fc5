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

#include "flowfill/network.hpp"

#include <stdexcept>

namespace flowfill {

void AudioNetConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("AudioNetConfig: " + what);
  };
  if (features == 0 || vocab == 0 || phone_dim == 0 || width == 0 || ffn_width == 0) {
    fail("all widths must be positive");
  }
  if (heads == 0 || width % heads != 0) fail("width must be divisible by heads");
  if (width % 2 != 0) fail("width must be even for sinusoidal positions");
  if (layers == 0) fail("at least one layer is required");
  if (skip_connections && layers % 2 != 0) fail("skip connections need an even layer count");
}

FieldTransformer::FieldTransformer(const std::string& name, std::size_t width,
                                   std::size_t layers, std::size_t heads, std::size_t ffn_width,
                                   bool skips, bool time_token, std::size_t time_position,
                                   Rng& rng)
    : width_(width), time_token_(time_token), time_position_(time_position) {
  if (time_token) {
    time_in_ = Linear(name + ".time_in", width, width, true, rng);
    time_out_ = Linear(name + ".time_out", width, width, true, rng);
  }
  for (std::size_t i = 0; i < layers; ++i) {
    blocks_.emplace_back(name + ".block" + std::to_string(i), width, heads, ffn_width, rng);
  }
  if (skips) {
    for (std::size_t i = layers / 2; i < layers; ++i) {
      skip_combiners_.emplace_back(name + ".skip" + std::to_string(i), 2 * width, width, true,
                                   rng);
    }
  }
  final_norm_ = LayerNorm(name + ".final_norm", width);
}

Var FieldTransformer::operator()(Tape& tape, const Var& x, std::optional<double> t,
                                 ForwardProbe* probe) const {
  const std::size_t n = x.value().rows();
  if (x.value().cols() != width_) {
    throw ShapeError("FieldTransformer", "expected width " + std::to_string(width_) + ", got " +
                                             shape_string(x.shape()));
  }
  Var h = add(x, tape.constant(sinusoidal_positions(n, width_)));
  if (time_token_) {
    if (!t) throw std::invalid_argument("FieldTransformer: flow step required");
    Var emb = tape.constant(sinusoidal_embed(*t, width_).reshaped({1, width_}));
    Var token = time_out_(tape, gelu(time_in_(tape, emb)));
    token = add(token, tape.constant(sinusoidal_positions(1, width_, time_position_)));
    const Var rows[] = {h, token};
    h = concat_rows(rows);
  }

  const std::size_t layers = blocks_.size();
  const bool skips = !skip_combiners_.empty();
  std::vector<Var> stored;
  for (std::size_t i = 0; i < layers; ++i) {
    if (skips && i >= layers / 2) {
      Var source = stored[layers - 1 - i];
      if (probe && probe->zero_skip_source == layers - 1 - i) {
        source = tape.constant(Array::zeros_like(source.value()));
      }
      const Var parts[] = {h, source};
      h = skip_combiners_[i - layers / 2](tape, concat_cols(parts));
    }
    if (probe) probe->layer_inputs.push_back(h.value());
    h = blocks_[i](tape, h);
    if (skips && i < layers / 2) stored.push_back(h);
  }
  h = final_norm_(tape, h);
  return time_token_ ? slice_rows(h, 0, n) : h;
}

void FieldTransformer::collect(ParameterList& out) {
  if (time_token_) {
    time_in_.collect(out);
    time_out_.collect(out);
  }
  for (auto& b : blocks_) b.collect(out);
  for (auto& s : skip_combiners_) s.collect(out);
  final_norm_.collect(out);
}

void FieldTransformer::collect(ConstParameterList& out) const {
  if (time_token_) {
    time_in_.collect(out);
    time_out_.collect(out);
  }
  for (const auto& b : blocks_) b.collect(out);
  for (const auto& s : skip_combiners_) s.collect(out);
  final_norm_.collect(out);
}

std::size_t FieldTransformer::time_parameter_count() const {
  ConstParameterList p;
  if (time_token_) {
    time_in_.collect(p);
    time_out_.collect(p);
  }
  return parameter_count(p);
}

std::size_t FieldTransformer::block_parameter_count() const {
  ConstParameterList p;
  for (const auto& b : blocks_) b.collect(p);
  final_norm_.collect(p);
  return parameter_count(p);
}

std::size_t FieldTransformer::skip_parameter_count() const {
  ConstParameterList p;
  for (const auto& s : skip_combiners_) s.collect(p);
  return parameter_count(p);
}

AudioVectorField::AudioVectorField(const AudioNetConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  phone_lookup_ = Embedding("phone_lookup", config.vocab, config.phone_dim, rng);
  input_projection_ = Linear("input_projection", 2 * config.features + config.phone_dim,
                             config.width, false, rng);
  stack_ = FieldTransformer("stack", config.width, config.layers, config.heads,
                            config.ffn_width, config.skip_connections, true,
                            config.time_position, rng);
  output_projection_ = Linear("output_projection", config.width, config.features, true, rng);
}

Var AudioVectorField::forward(Tape& tape, const Array& w, const Array& ctx,
                              std::span<const int> tokens, double t) const {
  return forward(tape, w, ctx, tokens, t, nullptr);
}

Var AudioVectorField::forward(Tape& tape, const Array& w, const Array& ctx,
                              std::span<const int> tokens, double t, ForwardProbe* probe) const {
  if (w.rank() != 2 || w.cols() != config_.features) {
    throw ShapeError("AudioVectorField", "w must be [N, " + std::to_string(config_.features) +
                                             "], got " + shape_string(w.shape()));
  }
  require_same_shape("AudioVectorField ctx", w, ctx);
  if (tokens.size() != w.rows()) {
    throw ShapeError("AudioVectorField", std::to_string(tokens.size()) + " tokens for " +
                                             std::to_string(w.rows()) + " frames");
  }
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("AudioVectorField: t outside [0, 1]");
  const Var parts[] = {tape.constant(w), tape.constant(ctx), phone_lookup_(tape, tokens)};
  Var x = input_projection_(tape, concat_cols(parts));
  return output_projection_(tape, stack_(tape, x, t, probe));
}

ParameterList AudioVectorField::parameters() {
  ParameterList out;
  phone_lookup_.collect(out);
  input_projection_.collect(out);
  stack_.collect(out);
  output_projection_.collect(out);
  return out;
}

ConstParameterList AudioVectorField::parameters() const {
  ConstParameterList out;
  phone_lookup_.collect(out);
  input_projection_.collect(out);
  stack_.collect(out);
  output_projection_.collect(out);
  return out;
}

std::vector<std::pair<std::string, std::size_t>> parameter_summary(const AudioVectorField& model) {
  auto count = [](const auto& block) {
    ConstParameterList p;
    block.collect(p);
    return parameter_count(p);
  };
  std::vector<std::pair<std::string, std::size_t>> rows = {
      {"phone_lookup", count(model.phone_lookup_)},
      {"input_projection", count(model.input_projection_)},
      {"time_embedding", model.stack_.time_parameter_count()},
      {"stack", model.stack_.block_parameter_count()},
      {"skip_combiners", model.stack_.skip_parameter_count()},
      {"output_projection", count(model.output_projection_)},
  };
  std::size_t total = 0;
  for (const auto& [name, n] : rows) total += n;
  rows.emplace_back("total", total);
  return rows;
}

}  // namespace flowfill
