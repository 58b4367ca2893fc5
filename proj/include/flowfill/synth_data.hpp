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
#include <string>
#include <vector>

#include "flowfill/array.hpp"
#include "flowfill/rng.hpp"
#include "flowfill/sequence.hpp"

namespace flowfill {

/// Parameters of the synthetic speech process. Each frame of phone p is drawn
/// from N(mu_p + s, emission_scale^2 I) where s is the utterance style latent.
struct ToyProcessSpec {
  std::size_t features = 8;
  std::size_t base_phones = 12;
  double emission_scale = 0.2;
  /// Phone (and SIL) means are drawn on a sphere of this radius with a minimum
  /// pairwise distance.
  double mean_radius = 4.0;
  double min_mean_separation = 4.0;
  std::size_t style_families = 2;
  std::size_t clusters_per_family = 4;
  double style_center_norm = 1.5;
  double style_jitter = 0.1;
  /// Relative amounts of data per family, reweighted by upsample_beta.
  std::vector<double> family_hours = {1.0, 1.0};
  double upsample_beta = 1.0;
  /// Per-phone mean durations are drawn from U[min, max]; each utterance scales
  /// them by a rate drawn from U[rate_min, rate_max].
  double duration_mean_min = 2.0;
  double duration_mean_max = 5.0;
  double rate_min = 0.5;
  double rate_max = 2.0;
  double pause_probability = 0.3;
  double pause_mean = 3.0;
  double edge_silence_probability = 0.7;
  std::size_t min_words = 3;
  std::size_t max_words = 8;
  std::size_t max_word_length = 4;
  /// Additive white noise on top of the emission noise.
  double noise_level = 0.0;
  /// Frames per second, used to express time spans such as silence trimming.
  double frame_rate = 20.0;
  /// Seed of the fixed process parameters (means, clusters, durations).
  std::uint64_t process_seed = 1234;

  void validate() const;
  friend bool operator==(const ToyProcessSpec&, const ToyProcessSpec&) = default;
};

/// The instantiated process: fixed means, style clusters and duration means.
class ToyProcess {
 public:
  explicit ToyProcess(const ToyProcessSpec& spec);

  const ToyProcessSpec& spec() const { return spec_; }
  const PhoneInventory& inventory() const { return inventory_; }
  /// Emission mean of an acoustic class (0 = SIL), raw feature units.
  const std::vector<double>& class_mean(std::size_t acoustic_class) const {
    return class_means_.at(acoustic_class);
  }
  std::size_t class_count() const { return class_means_.size(); }
  const std::vector<double>& cluster_center(std::size_t cluster) const {
    return cluster_centers_.at(cluster);
  }
  std::size_t cluster_count() const { return cluster_centers_.size(); }
  std::size_t family_of(std::size_t cluster) const { return cluster / spec_.clusters_per_family; }
  double duration_mean(std::size_t base_phone) const { return duration_means_.at(base_phone); }
  /// Probabilities of drawing each family.
  const std::vector<double>& family_weights() const { return family_weights_; }
  /// Frames equivalent to a duration in seconds, at least 1.
  int frames_for_seconds(double seconds) const;

  struct Utterance {
    Array x;                  ///< raw features [N, F]
    PhoneAlignment alignment; ///< ghost silences and postfixes applied
    std::vector<double> style;
    std::size_t cluster = 0;
    double rate = 1.0;
  };

  /// Draws a style latent from a given cluster.
  std::vector<double> sample_style(std::size_t cluster, Rng& rng) const;
  /// Draws a random word list (base phone ids).
  std::vector<std::vector<std::size_t>> sample_words(Rng& rng) const;
  /// Full utterance: cluster, style, rate, words, durations, pauses, frames.
  Utterance sample_utterance(Rng& rng) const;
  /// Utterance with the given content, style and rate.
  Utterance sample_utterance(const std::vector<std::vector<std::size_t>>& words,
                             const std::vector<double>& style, double rate, Rng& rng) const;
  /// Frames for a fixed alignment and style.
  Array emit(const PhoneAlignment& alignment, const std::vector<double>& style, Rng& rng) const;
  /// Shifted-geometric duration draw for a phone at the given rate.
  int sample_duration(std::size_t base_phone, double rate, Rng& rng) const;

 private:
  ToyProcessSpec spec_;
  PhoneInventory inventory_;
  std::vector<std::vector<double>> class_means_;
  std::vector<std::vector<double>> cluster_centers_;
  std::vector<double> duration_means_;
  std::vector<double> family_weights_;
};

/// p_s proportional to (n_s / N)^beta, normalized.
std::vector<double> language_upsample_weights(const std::vector<double>& hours, double beta);

/// Scalar global feature normalization.
struct Normalization {
  double mean = -5.8843;
  double std = 2.2615;
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

Array normalize_features(const Array& x, const Normalization& norm);
Array denormalize_features(const Array& x, const Normalization& norm);
/// Mean and std over the first max_frames frames of the given utterances.
Normalization estimate_normalization(const std::vector<Array>& utterances,
                                     std::size_t max_frames = 30000);

struct DatasetRecord {
  std::string id;
  Array x;                       ///< normalized frames
  PhoneAlignment alignment;
  std::vector<double> style;     ///< ground truth, may be empty
  double rate = 0.0;             ///< ground truth, 0 when absent
  std::size_t cluster = 0;
  std::size_t family = 0;

  /// Alignment invariants plus frame-count agreement.
  void validate(const PhoneInventory& inventory) const;
};

struct Dataset {
  ToyProcessSpec spec;
  Normalization normalization;
  std::vector<DatasetRecord> records;
};

/// Record i is generated from stream i of the seed, so records are
/// independent of one another and of n. Normalization statistics are
/// estimated from the generated frames unless given.
Dataset generate_dataset(const ToyProcessSpec& spec, std::size_t n, std::uint64_t seed,
                         const Normalization* normalization = nullptr);

}  // namespace flowfill
