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

#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowfill/rng.hpp"
#include "flowfill/tape.hpp"

namespace flowfill {

/// y = x W (+ b). W is [in, out].
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, bool bias, Rng& rng,
         double init_scale = 1.0);
  Var operator()(Tape& tape, const Var& x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;
  std::size_t in_features() const { return weight_.value.dim(0); }
  std::size_t out_features() const { return weight_.value.dim(1); }
  Parameter& weight() { return weight_; }

 private:
  Parameter weight_;
  Parameter bias_;
  bool has_bias_ = false;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t width);
  Var operator()(Tape& tape, const Var& x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

 private:
  Parameter gamma_;
  Parameter beta_;
};

/// Lookup table L in R^{V x H}.
class Embedding {
 public:
  Embedding() = default;
  Embedding(std::string name, std::size_t vocab, std::size_t width, Rng& rng);
  Var operator()(Tape& tape, std::span<const int> ids) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;
  std::size_t vocab() const { return table_.value.dim(0); }
  std::size_t width() const { return table_.value.dim(1); }

 private:
  Parameter table_;
};

/// Unmasked multi-head self-attention over all rows of x[T, D].
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(std::string name, std::size_t width, std::size_t heads, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

 private:
  std::size_t heads_ = 1;
  Linear qkv_;
  Linear out_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::string name, std::size_t width, std::size_t hidden, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

 private:
  Linear up_;
  Linear down_;
};

/// Pre-norm block: x + Attn(LN(x)), then + FFN(LN(.)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::string name, std::size_t width, std::size_t heads,
                   std::size_t ffn_width, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;

 private:
  LayerNorm norm1_;
  SelfAttention attn_;
  LayerNorm norm2_;
  FeedForward ffn_;
};

std::size_t parameter_count(const ConstParameterList& params);

/// Scales gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm after clipping.
double clip_grad_norm(Gradients& grads, double max_norm);

/// Linear warmup to peak, then linear decay to zero at total_steps.
struct LinearWarmupDecay {
  double peak = 1e-4;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  double at(std::size_t step) const;
};

/// Adam with bias correction. State is keyed by parameter name so it survives
/// a model being moved.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const ParameterList& params, const Gradients& grads, double lr);
  std::size_t steps() const { return steps_; }

 private:
  struct Moments {
    Array m;
    Array v;
  };
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

}  // namespace flowfill
