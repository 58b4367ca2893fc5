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

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowfill/network.hpp"
#include "flowfill/ode_solve.hpp"

namespace flowfill {

/// log(1 + l), optionally after dequantizing l to U[l - 0.5, l + 0.5].
double duration_forward_transform(int l, Rng* rng = nullptr);
std::vector<double> duration_forward_transform(std::span<const int> l, Rng* rng = nullptr);
/// round(exp(v) - 1) clipped at 0.
int duration_inverse_transform(double v);

enum class DurationMode { kRegression, kFlow };

std::string to_string(DurationMode mode);
DurationMode duration_mode_from_string(const std::string& name);

struct DurationNetConfig {
  DurationMode mode = DurationMode::kRegression;
  std::size_t vocab = 62;
  std::size_t phone_dim = 16;
  std::size_t width = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_width = 64;
  /// Regression only: false ignores l_ctx entirely (the unconditional variant).
  bool use_context = true;

  void validate() const;
  friend bool operator==(const DurationNetConfig&, const DurationNetConfig&) = default;
};

/// One utterance of duration training data in the transformed domain.
struct DurationItem {
  std::vector<int> phones;             ///< y
  std::vector<double> target;          ///< transformed l
  std::vector<double> context;         ///< transformed l where unmasked, 0 where masked
  std::vector<std::uint8_t> mask;      ///< m'
  void validate() const;
};

/// Transforms l (dequantized when rng is given) and zeroes the masked context.
DurationItem make_duration_item(std::span<const int> phones, std::span<const int> durations,
                                std::vector<std::uint8_t> mask, Rng* rng);

/// Either a regression network over (l_ctx, y) or a flow-matching vector field
/// over 1-wide duration features.
class DurationModel {
 public:
  DurationModel(const DurationNetConfig& config, Rng& rng);

  const DurationNetConfig& config() const { return config_; }
  DurationMode mode() const { return config_.mode; }

  /// Regression mode: transformed predictions [M, 1].
  Var regress(Tape& tape, std::span<const int> phones, std::span<const double> context) const;
  /// Flow mode: the vector field.
  const AudioVectorField& field() const;

  ParameterList parameters();
  ConstParameterList parameters() const;

 private:
  DurationNetConfig config_;
  // Regression
  Embedding phone_lookup_;
  Linear input_projection_;
  FieldTransformer stack_;
  Linear output_projection_;
  // Flow
  std::unique_ptr<AudioVectorField> field_;
};

/// Masked L1 in the transformed domain, normalized by the masked-phone count.
Var loss_duration_regression(Tape& tape, const DurationModel& model,
                             std::span<const DurationItem> batch);
/// Masked CFM loss on [M, 1] duration features; draws t and x0 from rng.
Var loss_duration_cfm(Tape& tape, const DurationModel& model, std::span<const DurationItem> batch,
                      const OtPath& path, Rng& rng);
/// The CfmBatch loss_duration_cfm regresses, exposed for inspection.
CfmBatch duration_cfm_batch(std::span<const DurationItem> batch, Rng& rng);

/// Predicts durations for masked phones and copies l_ctx through elsewhere.
/// rng drives the prior draw in flow mode and is unused in regression mode.
/// In flow mode solver.cfg_alpha is the duration guidance strength.
std::vector<int> predict_durations(const DurationModel& model, std::span<const int> phones,
                                   std::span<const int> l_ctx,
                                   std::span<const std::uint8_t> mask, DurationMode mode,
                                   const SolverConfig& solver, Rng& rng);

/// Point estimate: the regression output, or in flow mode the mean of the
/// given number of sampled durations. Unmasked entries equal l_ctx.
std::vector<double> point_estimate_durations(const DurationModel& model,
                                             std::span<const int> phones,
                                             std::span<const int> l_ctx,
                                             std::span<const std::uint8_t> mask,
                                             const SolverConfig& solver, Rng& rng,
                                             std::size_t samples = 20);

}  // namespace flowfill
