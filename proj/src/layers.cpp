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

#include "flowfill/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowfill {

Linear::Linear(std::string name, std::size_t in, std::size_t out, bool bias, Rng& rng,
               double init_scale)
    : has_bias_(bias) {
  weight_.name = name + ".weight";
  weight_.value = Array(Shape{in, out});
  const double std = init_scale / std::sqrt(static_cast<double>(in));
  for (double& v : weight_.value.data()) v = std * rng.normal();
  if (bias) {
    bias_.name = name + ".bias";
    bias_.value = Array(Shape{out});
  }
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  Var y = matmul(x, tape.watch(weight_));
  return has_bias_ ? add(y, tape.watch(bias_)) : y;
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

void Linear::collect(ConstParameterList& out) const {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

LayerNorm::LayerNorm(std::string name, std::size_t width) {
  gamma_ = Parameter{name + ".gamma", Array(Shape{width}, 1.0)};
  beta_ = Parameter{name + ".beta", Array(Shape{width})};
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return layer_norm(x, tape.watch(gamma_), tape.watch(beta_));
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void LayerNorm::collect(ConstParameterList& out) const {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

Embedding::Embedding(std::string name, std::size_t vocab, std::size_t width, Rng& rng) {
  table_.name = name + ".table";
  table_.value = Array(Shape{vocab, width});
  for (double& v : table_.value.data()) v = rng.normal();
}

Var Embedding::operator()(Tape& tape, std::span<const int> ids) const {
  return gather(tape.watch(table_), ids);
}

void Embedding::collect(ParameterList& out) { out.push_back(&table_); }
void Embedding::collect(ConstParameterList& out) const { out.push_back(&table_); }

SelfAttention::SelfAttention(std::string name, std::size_t width, std::size_t heads,
                             Rng& rng)
    : heads_(heads),
      qkv_(name + ".qkv", width, 3 * width, true, rng),
      out_(name + ".out", width, width, true, rng) {
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("SelfAttention: width " + std::to_string(width) +
                                " not divisible by heads " + std::to_string(heads));
  }
}

Var SelfAttention::operator()(Tape& tape, const Var& x) const {
  const std::size_t d = x.value().cols();
  const std::size_t dh = d / heads_;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qkv = qkv_(tape, x);
  std::vector<Var> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Var q = slice_cols(qkv, h * dh, dh);
    Var k = slice_cols(qkv, d + h * dh, dh);
    Var v = slice_cols(qkv, 2 * d + h * dh, dh);
    Var weights = softmax(scale(matmul_nt(q, k), scale_factor));
    heads.push_back(matmul(weights, v));
  }
  return out_(tape, heads_ == 1 ? heads[0] : concat_cols(heads));
}

void SelfAttention::collect(ParameterList& out) {
  qkv_.collect(out);
  out_.collect(out);
}

void SelfAttention::collect(ConstParameterList& out) const {
  qkv_.collect(out);
  out_.collect(out);
}

FeedForward::FeedForward(std::string name, std::size_t width, std::size_t hidden, Rng& rng)
    : up_(name + ".up", width, hidden, true, rng),
      down_(name + ".down", hidden, width, true, rng) {}

Var FeedForward::operator()(Tape& tape, const Var& x) const {
  return down_(tape, gelu(up_(tape, x)));
}

void FeedForward::collect(ParameterList& out) {
  up_.collect(out);
  down_.collect(out);
}

void FeedForward::collect(ConstParameterList& out) const {
  up_.collect(out);
  down_.collect(out);
}

TransformerBlock::TransformerBlock(std::string name, std::size_t width, std::size_t heads,
                                   std::size_t ffn_width, Rng& rng)
    : norm1_(name + ".norm1", width),
      attn_(name + ".attn", width, heads, rng),
      norm2_(name + ".norm2", width),
      ffn_(name + ".ffn", width, ffn_width, rng) {}

Var TransformerBlock::operator()(Tape& tape, const Var& x) const {
  Var h = add(x, attn_(tape, norm1_(tape, x)));
  return add(h, ffn_(tape, norm2_(tape, h)));
}

void TransformerBlock::collect(ParameterList& out) {
  norm1_.collect(out);
  attn_.collect(out);
  norm2_.collect(out);
  ffn_.collect(out);
}

void TransformerBlock::collect(ConstParameterList& out) const {
  norm1_.collect(out);
  attn_.collect(out);
  norm2_.collect(out);
  ffn_.collect(out);
}

std::size_t parameter_count(const ConstParameterList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

double clip_grad_norm(Gradients& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (norm > max_norm && norm > 0.0) {
    grads.scale(max_norm / norm);
    return grads.global_norm();
  }
  return norm;
}

double LinearWarmupDecay::at(std::size_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return peak;
  const double remaining = static_cast<double>(total_steps - std::min(step, total_steps));
  return peak * remaining / static_cast<double>(total_steps - warmup_steps);
}

void Adam::step(const ParameterList& params, const Gradients& grads, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Parameter* p : params) {
    if (!grads.contains(*p)) continue;
    const Array& g = grads[*p];
    auto [it, inserted] = state_.try_emplace(p->name);
    Moments& st = it->second;
    if (inserted) {
      st.m = Array::zeros_like(p->value);
      st.v = Array::zeros_like(p->value);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace flowfill
