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

#include "flowfill/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowfill {
namespace {

constexpr const char* kPostfix[] = {"", "_B", "_I", "_E", "_S"};

WordPosition position_in_word(std::size_t index, std::size_t size) {
  if (size == 1) return WordPosition::kSingleton;
  if (index == 0) return WordPosition::kBegin;
  if (index + 1 == size) return WordPosition::kEnd;
  return WordPosition::kInternal;
}

}  // namespace

// ---- PhoneInventory -----------------------------------------------------------

PhoneInventory::PhoneInventory(std::vector<std::string> base_names)
    : names_(std::move(base_names)) {
  if (names_.empty()) throw std::invalid_argument("PhoneInventory: no base phones");
}

PhoneInventory PhoneInventory::letters(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    names.push_back(i < 26 ? std::string(1, static_cast<char>('A' + i))
                           : "P" + std::to_string(i));
  }
  return PhoneInventory(std::move(names));
}

void PhoneInventory::require_valid(PhoneId id) const {
  if (!valid(id)) {
    throw std::out_of_range("unknown phone id " + std::to_string(id) + " (vocabulary " +
                            std::to_string(vocab_size()) + ")");
  }
}

PhoneId PhoneInventory::id(std::size_t base, WordPosition position) const {
  if (base >= names_.size()) {
    throw std::out_of_range("PhoneInventory: base phone " + std::to_string(base) +
                            " out of range");
  }
  return static_cast<PhoneId>(2 + 5 * base + static_cast<std::size_t>(position));
}

std::optional<std::size_t> PhoneInventory::base_of(PhoneId id) const {
  require_valid(id);
  if (id < 2) return std::nullopt;
  return static_cast<std::size_t>(id - 2) / 5;
}

WordPosition PhoneInventory::position_of(PhoneId id) const {
  require_valid(id);
  if (id < 2) return WordPosition::kNone;
  return static_cast<WordPosition>((id - 2) % 5);
}

PhoneId PhoneInventory::with_position(PhoneId id, WordPosition position) const {
  const auto base = base_of(id);
  if (!base) return id;
  return this->id(*base, position);
}

std::size_t PhoneInventory::acoustic_class(PhoneId id) const {
  require_valid(id);
  if (id == kNull) throw std::invalid_argument("acoustic_class: null token has no class");
  if (id == kSil) return 0;
  return 1 + *base_of(id);
}

std::string PhoneInventory::name(PhoneId id) const {
  require_valid(id);
  if (id == kNull) return "<null>";
  if (id == kSil) return "SIL";
  return names_[*base_of(id)] + kPostfix[static_cast<int>(position_of(id))];
}

PhoneId PhoneInventory::parse(const std::string& text) const {
  if (text == "SIL") return kSil;
  if (text == "<null>") return kNull;
  for (std::size_t b = 0; b < names_.size(); ++b) {
    for (int p = 0; p < 5; ++p) {
      if (text == names_[b] + kPostfix[p]) return id(b, static_cast<WordPosition>(p));
    }
  }
  throw std::invalid_argument("unknown phone name '" + text + "'");
}

// ---- PhoneAlignment -------------------------------------------------------------

std::size_t PhoneAlignment::frame_count() const {
  std::size_t n = 0;
  for (int d : durations) n += static_cast<std::size_t>(std::max(d, 0));
  return n;
}

void PhoneAlignment::validate(const PhoneInventory& inventory) const {
  if (phones.size() != durations.size()) {
    throw AlignmentError("alignment: " + std::to_string(phones.size()) + " phones vs " +
                         std::to_string(durations.size()) + " durations");
  }
  std::vector<int> owner(phones.size(), -1);
  std::size_t prev_end = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const WordSpan& span = words[w];
    if (span.begin >= span.end) throw AlignmentError("alignment: empty word " + std::to_string(w));
    if (span.end > phones.size() || span.begin < prev_end) {
      throw AlignmentError("alignment: word " + std::to_string(w) + " out of order or range");
    }
    prev_end = span.end;
    for (std::size_t j = span.begin; j < span.end; ++j) {
      if (inventory.is_sil(phones[j])) {
        throw AlignmentError("alignment: SIL inside word " + std::to_string(w));
      }
      const WordPosition expected = position_in_word(j - span.begin, span.size());
      if (inventory.position_of(phones[j]) != expected) {
        throw AlignmentError("alignment: phone " + inventory.name(phones[j]) + " at index " +
                             std::to_string(j) + " has the wrong word-position postfix");
      }
      owner[j] = static_cast<int>(w);
    }
  }
  for (std::size_t j = 0; j < phones.size(); ++j) {
    if (!inventory.valid(phones[j]) || phones[j] == PhoneInventory::kNull) {
      throw AlignmentError("alignment: invalid phone id at index " + std::to_string(j));
    }
    if (durations[j] < 0) {
      throw AlignmentError("alignment: negative duration at index " + std::to_string(j));
    }
    const bool sil = inventory.is_sil(phones[j]);
    if (!sil && owner[j] < 0) {
      throw AlignmentError("alignment: phone at index " + std::to_string(j) +
                           " belongs to no word");
    }
    if (!sil && durations[j] == 0) {
      throw AlignmentError("alignment: zero duration on non-SIL phone at index " +
                           std::to_string(j));
    }
  }
}

Array cat_frames(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("cat_frames", a.shape(), b.shape());
  }
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Array(Shape{a.rows() + b.rows(), a.cols()}, std::move(data));
}

// ---- ghost silence / postfixes --------------------------------------------------

PhoneAlignment insert_ghost_silence(std::span<const PhoneId> phones,
                                    std::span<const int> durations,
                                    std::span<const WordSpan> words) {
  if (phones.size() != durations.size()) {
    throw AlignmentError("insert_ghost_silence: phones/durations length mismatch");
  }
  for (std::size_t j = 0; j < durations.size(); ++j) {
    if (durations[j] <= 0) {
      throw AlignmentError("insert_ghost_silence: input duration at index " +
                           std::to_string(j) + " is not positive");
    }
  }
  PhoneAlignment out;
  auto push = [&](PhoneId p, int d) {
    out.phones.push_back(p);
    out.durations.push_back(d);
  };
  // Copies the SIL run [from, to) or inserts a ghost when it is empty.
  auto copy_silences = [&](std::size_t from, std::size_t to) {
    if (from == to) {
      push(PhoneInventory::kSil, 0);
      return;
    }
    for (std::size_t j = from; j < to; ++j) {
      if (phones[j] != PhoneInventory::kSil) {
        throw AlignmentError("insert_ghost_silence: non-SIL phone at index " +
                             std::to_string(j) + " outside every word");
      }
      push(phones[j], durations[j]);
    }
  };

  std::size_t cursor = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const WordSpan& span = words[w];
    if (span.begin >= span.end || span.end > phones.size() || span.begin < cursor) {
      throw AlignmentError("insert_ghost_silence: word " + std::to_string(w) +
                           " is empty, out of order, or out of range");
    }
    copy_silences(cursor, span.begin);
    WordSpan placed{out.phones.size(), 0};
    for (std::size_t j = span.begin; j < span.end; ++j) {
      if (phones[j] == PhoneInventory::kSil) {
        throw AlignmentError("insert_ghost_silence: SIL inside word " + std::to_string(w));
      }
      push(phones[j], durations[j]);
    }
    placed.end = out.phones.size();
    out.words.push_back(placed);
    cursor = span.end;
  }
  copy_silences(cursor, phones.size());
  return out;
}

std::vector<PhoneId> word_position_postfix(std::span<const PhoneId> phones,
                                           std::span<const WordSpan> words,
                                           const PhoneInventory& inventory) {
  std::vector<PhoneId> out(phones.begin(), phones.end());
  for (std::size_t w = 0; w < words.size(); ++w) {
    const WordSpan& span = words[w];
    if (span.begin >= span.end) {
      throw AlignmentError("word_position_postfix: empty word " + std::to_string(w));
    }
    if (span.end > phones.size()) {
      throw AlignmentError("word_position_postfix: word " + std::to_string(w) + " out of range");
    }
    for (std::size_t j = span.begin; j < span.end; ++j) {
      if (inventory.is_sil(phones[j])) {
        throw AlignmentError("word_position_postfix: SIL inside word " + std::to_string(w));
      }
      out[j] = inventory.with_position(phones[j], position_in_word(j - span.begin, span.size()));
    }
  }
  return out;
}

// ---- masks -------------------------------------------------------------------------

std::size_t MaskPair::masked_frames() const {
  return static_cast<std::size_t>(std::count(frame.begin(), frame.end(), 1));
}

std::size_t MaskPair::masked_phones() const {
  return static_cast<std::size_t>(std::count(phone.begin(), phone.end(), 1));
}

MaskPolicy MaskPolicy::for_kind(MaskKind kind) {
  if (kind == MaskKind::kAudio) return MaskPolicy{0.3, 0.7, 1.0};
  return MaskPolicy{0.2, 0.1, 1.0};
}

MaskPair mask_from_phones(std::vector<std::uint8_t> phone_mask, std::span<const int> durations) {
  MaskPair mask;
  mask.frame = rep(std::span<const std::uint8_t>(phone_mask), durations);
  mask.phone = std::move(phone_mask);
  return mask;
}

MaskPair sample_training_mask(const PhoneAlignment& alignment, MaskKind kind, Rng& rng) {
  return sample_training_mask(alignment, kind, MaskPolicy::for_kind(kind), rng);
}

MaskPair sample_training_mask(const PhoneAlignment& alignment, MaskKind kind,
                              const MaskPolicy& policy, Rng& rng) {
  const std::size_t m = alignment.phones.size();
  const std::span<const int> l(alignment.durations);
  std::vector<std::uint8_t> phone_mask(m, 0);
  if (m == 0) return mask_from_phones(std::move(phone_mask), l);
  if (rng.uniform() < policy.p_drop) {
    std::fill(phone_mask.begin(), phone_mask.end(), 1);
    return mask_from_phones(std::move(phone_mask), l);
  }
  const double r = rng.uniform(policy.min_fraction, policy.max_fraction);

  if (kind == MaskKind::kDuration) {
    const auto target = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(r * static_cast<double>(m) - 1e-9)), 1, m);
    const std::size_t start = rng.below(m - target + 1);
    std::fill_n(phone_mask.begin() + static_cast<std::ptrdiff_t>(start), target, 1);
    return mask_from_phones(std::move(phone_mask), l);
  }

  const std::size_t n = alignment.frame_count();
  if (n == 0) {
    std::fill(phone_mask.begin(), phone_mask.end(), 1);
    return mask_from_phones(std::move(phone_mask), l);
  }
  const auto target = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9)), 1, n);
  // Valid starts: phone boundaries that carry frames and leave >= target frames.
  std::vector<std::size_t> starts;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (l[j] > 0 && n - offset >= target) starts.push_back(j);
    offset += static_cast<std::size_t>(l[j]);
  }
  const std::size_t start = starts[rng.below(starts.size())];
  std::size_t covered = 0;
  for (std::size_t j = start; j < m && covered < target; ++j) {
    phone_mask[j] = 1;
    covered += static_cast<std::size_t>(l[j]);
  }
  return mask_from_phones(std::move(phone_mask), l);
}

bool mask_consistent(const MaskPair& mask, std::span<const int> durations) {
  return mask.phone.size() == durations.size() &&
         rep(std::span<const std::uint8_t>(mask.phone), durations) == mask.frame;
}

Array build_context(const Array& x, std::span<const std::uint8_t> frame_mask) {
  if (x.rank() != 2 || x.rows() != frame_mask.size()) {
    throw ShapeError("build_context", "mask of length " + std::to_string(frame_mask.size()) +
                                          " for frames " + shape_string(x.shape()));
  }
  Array out = x;
  const std::size_t f = x.cols();
  for (std::size_t i = 0; i < frame_mask.size(); ++i) {
    if (frame_mask[i]) std::fill_n(out.data().data() + i * f, f, 0.0);
  }
  return out;
}

std::pair<Array, PhoneAlignment> chunk_utterance(const Array& x, const PhoneAlignment& alignment,
                                                 std::size_t cap, Rng& rng) {
  const std::size_t n = x.rows();
  if (alignment.frame_count() != n) {
    throw AlignmentError("chunk_utterance: alignment covers " +
                         std::to_string(alignment.frame_count()) + " frames, audio has " +
                         std::to_string(n));
  }
  if (cap == 0) throw std::invalid_argument("chunk_utterance: cap must be positive");
  if (n <= cap) return {x, alignment};
  const std::size_t begin = rng.below(n - cap + 1);
  const std::size_t end = begin + cap;

  PhoneAlignment out;
  std::vector<long> remap(alignment.phones.size(), -1);
  std::size_t offset = 0;
  for (std::size_t j = 0; j < alignment.phones.size(); ++j) {
    const std::size_t lo = offset, hi = offset + static_cast<std::size_t>(alignment.durations[j]);
    offset = hi;
    const std::size_t a = std::max(lo, begin), b = std::min(hi, end);
    const bool zero_inside = lo == hi && lo > begin && lo < end;
    if (a < b || zero_inside) {
      remap[j] = static_cast<long>(out.phones.size());
      out.phones.push_back(alignment.phones[j]);
      out.durations.push_back(static_cast<int>(a < b ? b - a : 0));
    }
  }
  for (const WordSpan& w : alignment.words) {
    const bool whole = remap[w.begin] >= 0 && remap[w.end - 1] >= 0 &&
                       out.durations[remap[w.begin]] == alignment.durations[w.begin] &&
                       out.durations[remap[w.end - 1]] == alignment.durations[w.end - 1];
    if (whole) {
      out.words.push_back({static_cast<std::size_t>(remap[w.begin]),
                           static_cast<std::size_t>(remap[w.end - 1]) + 1});
    }
  }
  Array chunk(Shape{cap, x.cols()});
  std::copy_n(x.data().data() + begin * x.cols(), cap * x.cols(), chunk.data().data());
  return {std::move(chunk), std::move(out)};
}

void trim_edge_silence(std::span<const PhoneId> phones, std::span<int> durations,
                       int max_frames) {
  if (phones.empty()) return;
  if (phones.front() == PhoneInventory::kSil) {
    durations.front() = std::min(durations.front(), max_frames);
  }
  if (phones.back() == PhoneInventory::kSil) {
    durations.back() = std::min(durations.back(), max_frames);
  }
}

PhoneAlignment text_to_phones(const std::vector<std::vector<std::size_t>>& words,
                              const PhoneInventory& inventory) {
  PhoneAlignment out;
  out.phones.push_back(PhoneInventory::kSil);
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].empty()) throw AlignmentError("text_to_phones: empty word " + std::to_string(w));
    if (w > 0) out.phones.push_back(PhoneInventory::kSil);
    WordSpan span{out.phones.size(), 0};
    for (std::size_t k = 0; k < words[w].size(); ++k) {
      out.phones.push_back(
          inventory.id(words[w][k], position_in_word(k, words[w].size())));
    }
    span.end = out.phones.size();
    out.words.push_back(span);
  }
  out.phones.push_back(PhoneInventory::kSil);
  out.durations.assign(out.phones.size(), 0);
  return out;
}

}  // namespace flowfill
