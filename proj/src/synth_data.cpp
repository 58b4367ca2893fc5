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

#include "flowfill/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace flowfill {
namespace {

double norm2(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<double> random_direction(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  do {
    for (double& x : v) x = rng.normal();
  } while (norm2(v) < 1e-6);
  const double n = norm2(v);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

void ToyProcessSpec::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("ToyProcessSpec: " + what);
  };
  if (features == 0 || base_phones == 0) fail("features and base_phones must be positive");
  if (!(emission_scale > 0.0)) fail("emission_scale must be positive");
  if (min_mean_separation < 4.0 * emission_scale) {
    fail("phone means must be separated by at least 4x the emission scale");
  }
  if (!(mean_radius > 0.0)) fail("mean_radius must be positive");
  if (style_families == 0 || clusters_per_family == 0) fail("need at least one style cluster");
  if (family_hours.size() != style_families) fail("one family_hours entry per family");
  if (!(rate_min > 0.0 && rate_max >= rate_min)) fail("rate multiplier range must be positive");
  if (!(duration_mean_min >= 1.0 && duration_mean_max >= duration_mean_min)) {
    fail("duration means must be at least 1");
  }
  if (min_words == 0 || max_words < min_words || max_word_length == 0) fail("bad word ranges");
  if (!(frame_rate > 0.0)) fail("frame_rate must be positive");
  if (noise_level < 0.0) fail("noise_level must be nonnegative");
}

ToyProcess::ToyProcess(const ToyProcessSpec& spec)
    : spec_(spec), inventory_(PhoneInventory::letters(spec.base_phones)) {
  spec_.validate();
  Rng rng(spec.process_seed, 0);
  const std::size_t f = spec.features;

  // Acoustic class means by rejection sampling on the sphere.
  const std::size_t classes = spec.base_phones + 1;
  for (int attempt = 0; class_means_.size() < classes; ++attempt) {
    if (attempt > 1000000) {
      throw std::invalid_argument("ToyProcess: cannot place phone means with this separation");
    }
    std::vector<double> candidate = random_direction(f, rng);
    for (double& x : candidate) x *= spec.mean_radius;
    bool ok = true;
    for (const auto& m : class_means_) {
      double d = 0.0;
      for (std::size_t c = 0; c < f; ++c) d += (m[c] - candidate[c]) * (m[c] - candidate[c]);
      if (std::sqrt(d) < spec.min_mean_separation) {
        ok = false;
        break;
      }
    }
    if (ok) class_means_.push_back(std::move(candidate));
  }

  // Style cluster centers: orthogonal when they fit in the feature space.
  const std::size_t clusters = spec.style_families * spec.clusters_per_family;
  for (std::size_t k = 0; k < clusters; ++k) {
    std::vector<double> v = random_direction(f, rng);
    if (k < f) {
      for (const auto& prev : cluster_centers_) {
        const double dot = std::inner_product(v.begin(), v.end(), prev.begin(), 0.0) /
                           (spec.style_center_norm * spec.style_center_norm);
        for (std::size_t c = 0; c < f; ++c) v[c] -= dot * prev[c];
      }
      const double n = norm2(v);
      for (double& x : v) x /= n;
    }
    for (double& x : v) x *= spec.style_center_norm;
    cluster_centers_.push_back(std::move(v));
  }

  for (std::size_t p = 0; p < spec.base_phones; ++p) {
    duration_means_.push_back(rng.uniform(spec.duration_mean_min, spec.duration_mean_max));
  }
  family_weights_ = language_upsample_weights(spec.family_hours, spec.upsample_beta);
}

int ToyProcess::frames_for_seconds(double seconds) const {
  return std::max(1, static_cast<int>(std::lround(seconds * spec_.frame_rate)));
}

std::vector<double> ToyProcess::sample_style(std::size_t cluster, Rng& rng) const {
  std::vector<double> s = cluster_centers_.at(cluster);
  for (double& x : s) x += spec_.style_jitter * rng.normal();
  return s;
}

std::vector<std::vector<std::size_t>> ToyProcess::sample_words(Rng& rng) const {
  const std::size_t n = spec_.min_words + rng.below(spec_.max_words - spec_.min_words + 1);
  std::vector<std::vector<std::size_t>> words(n);
  for (auto& w : words) {
    const std::size_t len = 1 + rng.below(spec_.max_word_length);
    for (std::size_t k = 0; k < len; ++k) w.push_back(rng.below(spec_.base_phones));
  }
  return words;
}

namespace {

int shifted_geometric(double mean, Rng& rng) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  const double u = 1.0 - rng.uniform();  // (0, 1]
  return 1 + static_cast<int>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace

int ToyProcess::sample_duration(std::size_t base_phone, double rate, Rng& rng) const {
  return shifted_geometric(duration_means_.at(base_phone) * rate, rng);
}

ToyProcess::Utterance ToyProcess::sample_utterance(Rng& rng) const {
  const std::size_t families = spec_.style_families;
  double u = rng.uniform();
  std::size_t family = families - 1;
  for (std::size_t k = 0; k < families; ++k) {
    if (u < family_weights_[k]) {
      family = k;
      break;
    }
    u -= family_weights_[k];
  }
  const std::size_t cluster = family * spec_.clusters_per_family +
                              rng.below(spec_.clusters_per_family);
  std::vector<double> style = sample_style(cluster, rng);
  const double rate = rng.uniform(spec_.rate_min, spec_.rate_max);
  Utterance utt = sample_utterance(sample_words(rng), style, rate, rng);
  utt.cluster = cluster;
  return utt;
}

ToyProcess::Utterance ToyProcess::sample_utterance(
    const std::vector<std::vector<std::size_t>>& words, const std::vector<double>& style,
    double rate, Rng& rng) const {
  if (style.size() != spec_.features) {
    throw std::invalid_argument("sample_utterance: style width differs from features");
  }
  std::vector<PhoneId> phones;
  std::vector<int> durations;
  std::vector<WordSpan> spans;
  auto silence = [&](double mean) {
    phones.push_back(PhoneInventory::kSil);
    durations.push_back(shifted_geometric(mean * rate, rng));
  };
  if (rng.bernoulli(spec_.edge_silence_probability)) silence(spec_.pause_mean);
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].empty()) throw std::invalid_argument("sample_utterance: empty word");
    if (w > 0 && rng.bernoulli(spec_.pause_probability)) silence(spec_.pause_mean);
    WordSpan span{phones.size(), 0};
    for (std::size_t base : words[w]) {
      phones.push_back(inventory_.id(base));
      durations.push_back(sample_duration(base, rate, rng));
    }
    span.end = phones.size();
    spans.push_back(span);
  }
  if (rng.bernoulli(spec_.edge_silence_probability)) silence(spec_.pause_mean);

  Utterance utt;
  utt.alignment = insert_ghost_silence(phones, durations, spans);
  utt.alignment.phones = word_position_postfix(utt.alignment.phones, utt.alignment.words,
                                               inventory_);
  utt.style = style;
  utt.rate = rate;
  utt.x = emit(utt.alignment, style, rng);
  return utt;
}

Array ToyProcess::emit(const PhoneAlignment& alignment, const std::vector<double>& style,
                       Rng& rng) const {
  const std::size_t f = spec_.features;
  if (style.size() != f) throw std::invalid_argument("emit: style width differs from features");
  const auto frames = rep(alignment.phones, alignment.durations);
  Array x(Shape{frames.size(), f});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& mu = class_means_[inventory_.acoustic_class(frames[i])];
    for (std::size_t c = 0; c < f; ++c) {
      double v = mu[c] + style[c] + spec_.emission_scale * rng.normal();
      if (spec_.noise_level > 0.0) v += spec_.noise_level * rng.normal();
      x.at(i, c) = v;
    }
  }
  return x;
}

std::vector<double> language_upsample_weights(const std::vector<double>& hours, double beta) {
  if (hours.empty()) throw std::invalid_argument("language_upsample_weights: empty list");
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("language_upsample_weights: beta must lie in (0, 1]");
  }
  double total = 0.0;
  for (double h : hours) {
    if (!(h > 0.0)) throw std::invalid_argument("language_upsample_weights: hours must be > 0");
    total += h;
  }
  std::vector<double> p;
  double z = 0.0;
  for (double h : hours) {
    p.push_back(std::pow(h / total, beta));
    z += p.back();
  }
  for (double& v : p) v /= z;
  return p;
}

Array normalize_features(const Array& x, const Normalization& norm) {
  if (!(norm.std > 0.0)) throw std::invalid_argument("normalize_features: std must be positive");
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - norm.mean) / norm.std;
  return out;
}

Array denormalize_features(const Array& x, const Normalization& norm) {
  if (!(norm.std > 0.0)) {
    throw std::invalid_argument("denormalize_features: std must be positive");
  }
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * norm.std + norm.mean;
  return out;
}

Normalization estimate_normalization(const std::vector<Array>& utterances,
                                     std::size_t max_frames) {
  double s = 0.0, s2 = 0.0;
  std::size_t count = 0, frames = 0;
  for (const Array& x : utterances) {
    for (std::size_t r = 0; r < x.rows() && frames < max_frames; ++r, ++frames) {
      for (double v : x.row(r)) {
        s += v;
        s2 += v * v;
        ++count;
      }
    }
    if (frames >= max_frames) break;
  }
  if (count < 2) throw std::invalid_argument("estimate_normalization: too few frames");
  const double mean = s / static_cast<double>(count);
  const double var = s2 / static_cast<double>(count) - mean * mean;
  if (!(var > 0.0)) throw std::invalid_argument("estimate_normalization: zero variance");
  return {mean, std::sqrt(var)};
}

void DatasetRecord::validate(const PhoneInventory& inventory) const {
  alignment.validate(inventory);
  if (x.rank() != 2 || alignment.frame_count() != x.rows()) {
    throw AlignmentError("record " + id + ": alignment covers " +
                         std::to_string(alignment.frame_count()) + " frames, features have " +
                         shape_string(x.shape()));
  }
  if (!x.all_finite()) throw std::invalid_argument("record " + id + ": non-finite features");
}

Dataset generate_dataset(const ToyProcessSpec& spec, std::size_t n, std::uint64_t seed,
                         const Normalization* normalization) {
  const ToyProcess process(spec);
  Dataset data;
  data.spec = spec;
  std::vector<ToyProcess::Utterance> raw;
  raw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, i);
    raw.push_back(process.sample_utterance(rng));
  }
  if (normalization) {
    data.normalization = *normalization;
  } else {
    std::vector<Array> frames;
    for (const auto& u : raw) frames.push_back(u.x);
    data.normalization = estimate_normalization(frames);
  }
  char id[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(id, sizeof(id), "utt%06zu", i);
    DatasetRecord rec;
    rec.id = id;
    rec.x = normalize_features(raw[i].x, data.normalization);
    rec.alignment = std::move(raw[i].alignment);
    rec.style = std::move(raw[i].style);
    rec.rate = raw[i].rate;
    rec.cluster = raw[i].cluster;
    rec.family = process.family_of(raw[i].cluster);
    data.records.push_back(std::move(rec));
  }
  return data;
}

}  // namespace flowfill
