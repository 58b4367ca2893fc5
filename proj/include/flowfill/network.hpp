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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowfill/flow_match.hpp"
#include "flowfill/layers.hpp"

namespace flowfill {

struct AudioNetConfig {
  std::size_t features = 8;     ///< F
  std::size_t vocab = 62;       ///< K, including the null and SIL ids
  std::size_t phone_dim = 16;   ///< H
  std::size_t width = 64;       ///< D
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ffn_width = 128;
  bool skip_connections = true;
  /// Position index given to the flow-step token; frames use 0..N-1.
  std::size_t time_position = 4096;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  friend bool operator==(const AudioNetConfig&, const AudioNetConfig&) = default;
};

/// Test hook into the transformer stack.
struct ForwardProbe {
  /// Zeroes the stored output of this first-half layer where it feeds the skip
  /// combiner only; the residual path is left intact.
  std::optional<std::size_t> zero_skip_source;
  /// Filled with the input of every layer, after any skip combination.
  std::vector<Array> layer_inputs;
};

/// Pre-norm transformer over a [N, D] sequence with sinusoidal frame positions,
/// an optional flow-step token appended along the time axis, and optional
/// U-Net style skips joining layer i with layer L-1-i by concat + linear.
class FieldTransformer {
 public:
  FieldTransformer() = default;
  FieldTransformer(const std::string& name, std::size_t width, std::size_t layers,
                   std::size_t heads, std::size_t ffn_width, bool skips, bool time_token,
                   std::size_t time_position, Rng& rng);

  /// x is [N, D]; returns the final-norm states of the N frame positions.
  Var operator()(Tape& tape, const Var& x, std::optional<double> t,
                 ForwardProbe* probe = nullptr) const;

  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;
  /// Parameter counts of the time MLP, the blocks, and the skip combiners.
  std::size_t time_parameter_count() const;
  std::size_t block_parameter_count() const;
  std::size_t skip_parameter_count() const;

 private:
  std::size_t width_ = 0;
  bool time_token_ = false;
  std::size_t time_position_ = 0;
  Linear time_in_;
  Linear time_out_;
  std::vector<TransformerBlock> blocks_;
  std::vector<Linear> skip_combiners_;  ///< one per second-half layer
  LayerNorm final_norm_;
};

/// v_t(w, x_ctx, z): phone lookup, input projection W_p without bias, the
/// transformer stack, and an output projection back to F.
class AudioVectorField : public ConditionalField {
 public:
  AudioVectorField(const AudioNetConfig& config, Rng& rng);

  Var forward(Tape& tape, const Array& w, const Array& ctx, std::span<const int> tokens,
              double t) const override;
  Var forward(Tape& tape, const Array& w, const Array& ctx, std::span<const int> tokens,
              double t, ForwardProbe* probe) const;
  int null_token() const override { return 0; }

  const AudioNetConfig& config() const { return config_; }
  ParameterList parameters();
  ConstParameterList parameters() const;

 private:
  friend std::vector<std::pair<std::string, std::size_t>> parameter_summary(
      const AudioVectorField& model);
  AudioNetConfig config_;
  Embedding phone_lookup_;
  Linear input_projection_;
  FieldTransformer stack_;
  Linear output_projection_;
};

/// Per-block parameter counts. The last entry is "total".
std::vector<std::pair<std::string, std::size_t>> parameter_summary(const AudioVectorField& model);

}  // namespace flowfill
