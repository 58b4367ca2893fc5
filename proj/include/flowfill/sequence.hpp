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
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowfill/array.hpp"
#include "flowfill/rng.hpp"

namespace flowfill {

using PhoneId = int;

enum class WordPosition : std::uint8_t { kNone = 0, kBegin, kInternal, kEnd, kSingleton };

/// Token space shared by every model: a null-condition id, SIL, and each base
/// phone in five variants (bare plus the four word-position postfixes).
class PhoneInventory {
 public:
  static constexpr PhoneId kNull = 0;
  static constexpr PhoneId kSil = 1;

  explicit PhoneInventory(std::vector<std::string> base_names);
  /// Base phones named "A", "B", ..., then "P26", "P27", ...
  static PhoneInventory letters(std::size_t count);

  std::size_t base_count() const { return names_.size(); }
  std::size_t vocab_size() const { return 2 + 5 * names_.size(); }
  const std::vector<std::string>& base_names() const { return names_; }

  PhoneId id(std::size_t base, WordPosition position = WordPosition::kNone) const;
  bool valid(PhoneId id) const { return id >= 0 && static_cast<std::size_t>(id) < vocab_size(); }
  bool is_sil(PhoneId id) const { return id == kSil; }
  /// Base index of a phone id; nullopt for SIL and null.
  std::optional<std::size_t> base_of(PhoneId id) const;
  WordPosition position_of(PhoneId id) const;
  PhoneId with_position(PhoneId id, WordPosition position) const;

  /// Acoustic class ignoring the postfix: 0 = SIL, 1 + base otherwise.
  std::size_t acoustic_class(PhoneId id) const;
  std::size_t acoustic_class_count() const { return names_.size() + 1; }

  std::string name(PhoneId id) const;
  /// Inverse of name(); throws for unknown names.
  PhoneId parse(const std::string& name) const;

 private:
  void require_valid(PhoneId id) const;
  std::vector<std::string> names_;
};

/// Half-open range of phone indices forming one word.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// Phone sequence y with per-phone frame counts l and word grouping.
struct PhoneAlignment {
  std::vector<PhoneId> phones;
  std::vector<int> durations;
  std::vector<WordSpan> words;

  std::size_t frame_count() const;
  /// Checks durations, SIL placement, word partition, and postfix consistency.
  void validate(const PhoneInventory& inventory) const;
};

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Repeats values[j] durations[j] times.
template <typename T>
std::vector<T> rep(std::span<const T> values, std::span<const int> durations) {
  if (values.size() != durations.size()) {
    throw std::invalid_argument("rep: " + std::to_string(values.size()) + " values vs " +
                                std::to_string(durations.size()) + " durations");
  }
  std::vector<T> out;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (durations[j] < 0) {
      throw std::invalid_argument("rep: negative duration at index " + std::to_string(j));
    }
    out.insert(out.end(), static_cast<std::size_t>(durations[j]), values[j]);
  }
  return out;
}

template <typename T>
std::vector<T> rep(const std::vector<T>& values, const std::vector<int>& durations) {
  return rep(std::span<const T>(values), std::span<const int>(durations));
}

template <typename T>
std::vector<T> cat(std::span<const T> a, std::span<const T> b) {
  std::vector<T> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

template <typename T>
std::vector<T> cat(const std::vector<T>& a, const std::vector<T>& b) {
  return cat(std::span<const T>(a), std::span<const T>(b));
}

/// Frame-axis concatenation of two [N, F] arrays with equal F.
Array cat_frames(const Array& a, const Array& b);

/// Adds zero-length SIL at every word boundary and utterance end that lacks one.
/// Input must have no zero durations and SIL only between words or at the ends.
PhoneAlignment insert_ghost_silence(std::span<const PhoneId> phones,
                                    std::span<const int> durations,
                                    std::span<const WordSpan> words);

/// Applies _B/_I/_E/_S by position within each word. SIL is left unchanged.
std::vector<PhoneId> word_position_postfix(std::span<const PhoneId> phones,
                                           std::span<const WordSpan> words,
                                           const PhoneInventory& inventory);

/// Frame mask m and phone mask m' with m == rep(m', l).
struct MaskPair {
  std::vector<std::uint8_t> frame;
  std::vector<std::uint8_t> phone;

  std::size_t masked_frames() const;
  std::size_t masked_phones() const;
};

enum class MaskKind { kAudio, kDuration };

struct MaskPolicy {
  double p_drop = 0.3;
  double min_fraction = 0.7;
  double max_fraction = 1.0;

  static MaskPolicy for_kind(MaskKind kind);
  friend bool operator==(const MaskPolicy&, const MaskPolicy&) = default;
};

MaskPair mask_from_phones(std::vector<std::uint8_t> phone_mask, std::span<const int> durations);

/// Training mask: whole sequence with probability p_drop, else one contiguous
/// phone-aligned segment covering a U[min,max] fraction of frames (audio) or
/// phones (duration).
MaskPair sample_training_mask(const PhoneAlignment& alignment, MaskKind kind, Rng& rng);
MaskPair sample_training_mask(const PhoneAlignment& alignment, MaskKind kind,
                              const MaskPolicy& policy, Rng& rng);

/// True iff frame == rep(phone, durations).
bool mask_consistent(const MaskPair& mask, std::span<const int> durations);

/// x_ctx = (1 - m) * x, row-wise.
Array build_context(const Array& x, std::span<const std::uint8_t> frame_mask);

/// Random contiguous window of at most cap frames, with the alignment clipped to
/// it. Words cut by the window edge are dropped from the grouping.
std::pair<Array, PhoneAlignment> chunk_utterance(const Array& x, const PhoneAlignment& alignment,
                                                 std::size_t cap, Rng& rng);

/// Caps leading/trailing SIL durations at max_frames.
void trim_edge_silence(std::span<const PhoneId> phones, std::span<int> durations,
                       int max_frames);

/// Phone sequence for a list of words (each a list of base phone ids): SIL at
/// both ends and between words, postfixes applied. Durations are all zero.
PhoneAlignment text_to_phones(const std::vector<std::vector<std::size_t>>& words,
                              const PhoneInventory& inventory);

}  // namespace flowfill
