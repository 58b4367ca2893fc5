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
#include <span>
#include <vector>

#include "flowfill/array.hpp"
#include "flowfill/rng.hpp"
#include "flowfill/tape.hpp"

namespace flowfill {

/// Gaussian optimal-transport conditional path:
///   mu_t = t x1,  sigma_t = 1 - (1 - sigma_min) t.
class OtPath {
 public:
  static constexpr double kDefaultSigmaMin = 1e-5;

  explicit OtPath(double sigma_min = kDefaultSigmaMin);

  double sigma_min() const { return sigma_min_; }

  struct MeanStd {
    Array mean;
    double std;
  };
  /// Throws for t outside [0, 1].
  MeanStd mean_std(double t, const Array& x1) const;

  /// phi_t(x0 | x1) = (1 - (1 - sigma_min) t) x0 + t x1.
  Array flow(double t, const Array& x0, const Array& x1) const;

  /// u_t(x | x1) = (x1 - (1 - sigma_min) x) / (1 - (1 - sigma_min) t).
  /// Throws if the denominator is at most 1e-12.
  Array vector_field(double t, const Array& x, const Array& x1) const;

  /// x1 - (1 - sigma_min) x0: the field along the flow, constant in t.
  Array regression_target(const Array& x0, const Array& x1) const;

 private:
  double sigma_min_;
};

/// A trainable conditional vector field v_t(w, ctx, tokens). The audio model and
/// the flow-matching duration model both implement this.
class ConditionalField {
 public:
  virtual ~ConditionalField() = default;
  /// w and ctx are [N, F]; tokens has N entries. Returns a [N, F] node.
  virtual Var forward(Tape& tape, const Array& w, const Array& ctx,
                      std::span<const int> tokens, double t) const = 0;
  /// Token used for every position when the condition is dropped.
  virtual int null_token() const = 0;
};

/// One training example for the conditional flow-matching objective.
struct CfmItem {
  Array x1;                    ///< target frames [N, F]
  Array x0;                    ///< prior draw, same shape
  double t = 0.0;              ///< flow step
  Array x_ctx;                 ///< context, zero at masked frames
  std::vector<int> z;          ///< frame-level tokens, N entries
  std::vector<std::uint8_t> m; ///< frame mask, 1 = masked

  /// Checks shapes, mask values, and that the context is zero under the mask.
  void validate() const;
};

using CfmBatch = std::vector<CfmItem>;

/// Draws t ~ U[0,1] and x0 ~ N(0, I) for a target/context pair.
CfmItem make_cfm_item(Array x1, Array x_ctx, std::vector<int> z, std::vector<std::uint8_t> m,
                      Rng& rng);

enum class LossFrames { kAll, kMasked };

/// Squared-error CFM loss against regression_target at w = flow(t, x0, x1).
///
/// kAll averages over every N*F entry of the batch. kMasked zeroes entries outside
/// m and divides by the number of masked entries in the batch; a batch with no
/// masked frame is an error.
Var cfm_loss(Tape& tape, const ConditionalField& model, const CfmBatch& batch,
             const OtPath& path, LossFrames frames);
double cfm_loss_value(const ConditionalField& model, const CfmBatch& batch, const OtPath& path,
                      LossFrames frames);

/// Loss of a fixed prediction per item, without a model. Same reductions as cfm_loss.
double cfm_loss_of_predictions(const CfmBatch& batch, std::span<const Array> predictions,
                               const OtPath& path, LossFrames frames);

/// (1 + alpha) v_cond - alpha v_uncond. alpha == 0 returns v_cond bitwise.
Array cfg_combine(const Array& v_cond, const Array& v_uncond, double alpha);

/// With probability p_uncond, zeroes x_ctx and sets every token to null_token.
/// Returns whether the condition was dropped. Context and tokens are dropped
/// jointly; there is no partial drop.
bool drop_conditioning(CfmItem& item, double p_uncond, Rng& rng, int null_token);
/// Batch form; returns the number of dropped items.
std::size_t drop_conditioning(CfmBatch& batch, double p_uncond, Rng& rng, int null_token);

}  // namespace flowfill
