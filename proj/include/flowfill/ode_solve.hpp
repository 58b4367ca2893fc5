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

#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowfill/array.hpp"
#include "flowfill/flow_match.hpp"

namespace flowfill {

enum class SolverMethod { kEuler, kMidpoint, kAdaptive };

std::string to_string(SolverMethod method);
SolverMethod solver_method_from_string(const std::string& name);

struct SolverConfig {
  SolverMethod method = SolverMethod::kMidpoint;
  /// Fixed-step size; 1/step_size must be an integer.
  double step_size = 0.0625;
  /// Adaptive solver tolerances.
  double atol = 1e-5;
  double rtol = 1e-5;
  /// Guidance strength; 0 disables the unconditional evaluation entirely.
  double cfg_alpha = 0.0;
  bool keep_states = false;

  void validate() const;
  /// Number of fixed steps covering [0, 1].
  std::size_t steps() const;
};

/// Fixed-step config whose unguided evaluation count is nfe.
/// Midpoint needs an even nfe.
SolverConfig config_for_nfe(SolverMethod method, std::size_t nfe, double cfg_alpha = 0.0);

struct SolveTrace {
  std::size_t nfe = 0;
  Array endpoint;
  std::vector<double> times;   ///< filled when keep_states
  std::vector<Array> states;   ///< filled when keep_states
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  double wall_time_ms = 0.0;
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

using VectorField = std::function<Array(double t, const Array& w)>;

/// Integrates dw/dt = field(t, w) from t = 0 to exactly t = 1.
SolveTrace solve(const VectorField& field, const Array& x0, const SolverConfig& config);

/// Integrates the guided field (1 + a) v(w, ctx, z) - a v(w, 0, null) of a model.
/// Each network call counts as one evaluation, so guidance doubles nfe.
SolveTrace solve_guided(const ConditionalField& model, const Array& x_ctx,
                        std::span<const int> tokens, const Array& x0,
                        const SolverConfig& config);

/// Network output at (t, w) as a plain array.
Array evaluate_field(const ConditionalField& model, const Array& w, const Array& ctx,
                     std::span<const int> tokens, double t);

struct SweepCell {
  std::size_t nfe = 0;           ///< evaluations per sample
  double wall_time_ms = 0.0;     ///< per sample
  std::vector<std::pair<std::string, double>> metrics;
};

struct SweepRow {
  std::size_t nfe = 0;
  double alpha = 0.0;
  std::string metric;
  double value = 0.0;
  double wall_time_ms = 0.0;
};

using SweepEvaluator = std::function<SweepCell(const SolverConfig&)>;

/// Runs evaluate over the grid nfe_list x alpha_list (unguided nfe per cell) and
/// flattens to one row per metric.
std::vector<SweepRow> nfe_sweep(const SweepEvaluator& evaluate,
                                std::span<const std::size_t> nfe_list,
                                std::span<const double> alpha_list,
                                SolverMethod method = SolverMethod::kMidpoint);

inline constexpr const char* kSweepCsvHeader = "nfe,alpha,metric,value,wall_time_ms";
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace flowfill
