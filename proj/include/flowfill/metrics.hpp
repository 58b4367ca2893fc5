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

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowfill/array.hpp"
#include "flowfill/synth_data.hpp"

namespace flowfill {

struct GaussianFit {
  std::vector<double> mean;
  Array covariance;  ///< [d, d], population estimate
  std::size_t count = 0;

  std::size_t dim() const { return mean.size(); }
};

/// Mean and population covariance of row vectors, plus ridge * I.
GaussianFit fit_gaussian(const std::vector<std::vector<double>>& samples, double ridge = 0.0);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
/// Throws std::domain_error if a covariance is not PSD after symmetrization.
double frechet_gaussian(const GaussianFit& a, const GaussianFit& b);

/// Per-utterance pooled feature: mean over frames followed by std over frames.
std::vector<double> fsd_feature(const Array& x);

/// Fréchet distance between Gaussian fits of pooled features. Both sets need
/// at least 32 utterances.
double fsd_analog(std::span<const Array> generated, std::span<const Array> reference);

/// 1-D Fréchet distance of mean/population-variance fits; each side needs >= 2 values.
double fdd(std::span<const double> sampled, std::span<const double> reference);

/// E[|m (l - l_hat)|_1] / E[|m|_1] over utterances.
double ms_mae(const std::vector<std::vector<double>>& predictions,
              const std::vector<std::vector<int>>& targets,
              const std::vector<std::vector<std::uint8_t>>& masks);

/// Pearson correlation across utterances between the mean masked predicted
/// duration and the mean unmasked context duration. nullopt when either side
/// has zero variance.
std::optional<double> ms_corr(const std::vector<std::vector<double>>& predictions,
                              const std::vector<std::vector<int>>& contexts,
                              const std::vector<std::vector<std::uint8_t>>& masks);

/// Per-frame maximum-likelihood phone decoding under the ground-truth emission
/// means, working on normalized frames.
class PhoneClassifier {
 public:
  PhoneClassifier(const ToyProcess& process, const Normalization& normalization);
  /// Acoustic class (0 = SIL, 1 + base) of every frame.
  std::vector<std::size_t> classify(const Array& x) const;
  std::size_t classify_frame(std::span<const double> frame) const;
  /// Mean emission of a class in normalized units.
  const std::vector<double>& normalized_mean(std::size_t cls) const { return means_.at(cls); }
  const PhoneInventory& inventory() const { return inventory_; }
  std::size_t class_count() const { return means_.size(); }

 private:
  PhoneInventory inventory_;
  std::vector<std::vector<double>> means_;
};

/// Fraction of frames whose decoded class differs from the class of z.
/// Throws for null or out-of-range phone ids.
double phone_error_rate(const PhoneClassifier& classifier, const Array& x,
                        std::span<const int> z);

/// Unit-normalized mean residual between each frame and the emission mean of
/// its decoded phone: an estimate of the style latent direction.
class StyleEmbedder {
 public:
  explicit StyleEmbedder(const PhoneClassifier& classifier) : classifier_(&classifier) {}
  std::vector<double> embed(const Array& x) const;

 private:
  const PhoneClassifier* classifier_;
};

double cosine(std::span<const double> a, std::span<const double> b);
double style_similarity(const StyleEmbedder& embedder, const Array& a, const Array& b);

struct MetricRow {
  std::string metric;
  std::string split;
  double value = 0.0;
  std::size_t n = 0;
};

inline constexpr const char* kMetricCsvHeader = "metric,split,value,n";
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);

}  // namespace flowfill
