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

#include "flowfill/tasks.hpp"

#include <algorithm>
#include <stdexcept>

namespace flowfill {
namespace {

void require_models(const TaskModels& m, bool need_duration) {
  if (!m.audio || !m.inventory || (need_duration && !m.duration)) {
    throw std::invalid_argument("task: models are missing");
  }
  if (m.audio->config().vocab != m.inventory->vocab_size()) {
    throw std::invalid_argument("task: audio model vocabulary " +
                                std::to_string(m.audio->config().vocab) +
                                " differs from inventory " +
                                std::to_string(m.inventory->vocab_size()));
  }
}

void require_phones(const TaskModels& m, std::span<const int> ids, const char* what) {
  for (int id : ids) {
    if (!m.inventory->valid(id) || id == PhoneInventory::kNull) {
      throw std::invalid_argument(std::string("task: ") + what + " contains phone id " +
                                  std::to_string(id) + " outside the model vocabulary");
    }
  }
}

Array zeros_frames(std::size_t n, std::size_t f) { return Array(Shape{n, f}); }

// Samples frames given context, transcript and prior seed.
SolveTrace sample_audio(const TaskModels& m, const Array& ctx, std::span<const int> z,
                        const TaskOptions& o) {
  Rng rng(o.seed, 1);
  const Array x0 = rng.normal_array(ctx.shape());
  return solve_guided(*m.audio, ctx, z, x0, o.audio_solver);
}

// Durations for phones under mask; non-SIL phones get at least one frame and
// edge silences of the masked segment are trimmed.
std::vector<int> infer_durations(const TaskModels& m, std::span<const int> phones,
                                 std::span<const int> l_ctx, std::span<const std::uint8_t> mask,
                                 const TaskOptions& o) {
  Rng rng(o.seed, 0);
  std::vector<int> l = predict_durations(*m.duration, phones, l_ctx, mask, m.duration->mode(),
                                         o.duration_solver, rng);
  for (std::size_t j = 0; j < l.size(); ++j) {
    if (mask[j] && !m.inventory->is_sil(phones[j])) l[j] = std::max(l[j], 1);
  }
  return l;
}

void trim_masked_edges(std::span<const int> phones, std::span<int> l,
                       std::span<const std::uint8_t> mask, int max_frames) {
  const auto first = std::find(mask.begin(), mask.end(), 1);
  if (first == mask.end()) return;
  const auto b = static_cast<std::size_t>(first - mask.begin());
  std::size_t e = mask.size();
  while (e > b && !mask[e - 1]) --e;
  trim_edge_silence(phones.subspan(b, e - b), l.subspan(b, e - b), max_frames);
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kZeroShotTts: return "zs_tts";
    case TaskKind::kStyleTransfer: return "style_transfer";
    case TaskKind::kDenoise: return "denoise";
    case TaskKind::kEdit: return "edit";
    case TaskKind::kSample: return "sample";
    case TaskKind::kStyleShuffle: return "style_shuffle";
  }
  return "unknown";
}

TaskResult zero_shot_tts(const TaskModels& m, const Utterance& reference,
                         const PhoneAlignment& target, const TaskOptions& o) {
  require_models(m, true);
  if (target.phones.empty()) throw std::invalid_argument("zero_shot_tts: empty target");
  require_phones(m, target.phones, "target");
  if (reference.x.rank() != 2 || reference.x.rows() == 0) return diverse_sample(m, target, o);
  require_phones(m, reference.alignment.phones, "reference");
  const std::size_t n_ref = reference.x.rows();
  if (reference.alignment.frame_count() != n_ref) {
    throw AlignmentError("zero_shot_tts: reference alignment does not match its frames");
  }
  const std::size_t m_ref = reference.alignment.phones.size();
  const std::size_t m_tgt = target.phones.size();

  const std::vector<int> y = cat(reference.alignment.phones, target.phones);
  std::vector<int> l_ctx = cat(reference.alignment.durations, std::vector<int>(m_tgt, 0));
  std::vector<std::uint8_t> mask(m_ref + m_tgt, 1);
  if (o.condition_durations) {
    std::fill_n(mask.begin(), m_ref, 0);
  } else {
    std::fill_n(l_ctx.begin(), m_ref, 0);
  }
  std::vector<int> l = infer_durations(m, y, l_ctx, mask, o);
  std::copy_n(reference.alignment.durations.begin(), m_ref, l.begin());
  trim_masked_edges(std::span<const int>(y).subspan(m_ref), std::span<int>(l).subspan(m_ref),
                    std::vector<std::uint8_t>(m_tgt, 1), m.edge_silence_frames);

  const std::vector<int> z = rep(y, l);
  const std::size_t n = z.size();
  if (n == n_ref) throw std::runtime_error("zero_shot_tts: predicted target has no frames");
  const Array ctx = cat_frames(reference.x, zeros_frames(n - n_ref, reference.x.cols()));
  const SolveTrace trace = sample_audio(m, ctx, z, o);

  TaskResult out;
  const std::size_t f = reference.x.cols();
  out.x = Array(Shape{n - n_ref, f});
  std::copy(trace.endpoint.data().begin() + static_cast<std::ptrdiff_t>(n_ref * f),
            trace.endpoint.data().end(), out.x.data().begin());
  out.z.assign(z.begin() + static_cast<std::ptrdiff_t>(n_ref), z.end());
  out.alignment.phones = target.phones;
  out.alignment.durations.assign(l.begin() + static_cast<std::ptrdiff_t>(m_ref), l.end());
  out.alignment.words = target.words;
  out.nfe = trace.nfe;
  return out;
}

TaskResult style_transfer(const TaskModels& m, const Utterance& reference,
                          std::span<const int> z_target, const TaskOptions& o) {
  require_models(m, false);
  if (z_target.empty()) throw std::invalid_argument("style_transfer: empty target transcript");
  require_phones(m, z_target, "target transcript");
  require_phones(m, reference.alignment.phones, "reference");
  const std::size_t n_ref = reference.x.rows();
  const std::vector<int> z_ref = rep(reference.alignment.phones, reference.alignment.durations);
  if (z_ref.size() != n_ref) {
    throw AlignmentError("style_transfer: reference alignment does not match its frames");
  }
  const std::vector<int> z = cat(z_ref, std::vector<int>(z_target.begin(), z_target.end()));
  const std::size_t f = m.audio->config().features;
  const Array ctx = n_ref ? cat_frames(reference.x, zeros_frames(z_target.size(), f))
                          : zeros_frames(z_target.size(), f);
  const SolveTrace trace = sample_audio(m, ctx, z, o);
  TaskResult out;
  out.x = Array(Shape{z_target.size(), f});
  std::copy(trace.endpoint.data().begin() + static_cast<std::ptrdiff_t>(n_ref * f),
            trace.endpoint.data().end(), out.x.data().begin());
  out.z.assign(z_target.begin(), z_target.end());
  out.nfe = trace.nfe;
  return out;
}

TaskResult denoise(const TaskModels& m, const Utterance& noisy, std::size_t begin,
                   std::size_t end, const TaskOptions& o) {
  require_models(m, false);
  const std::size_t n = noisy.x.rows();
  if (begin >= end) throw std::invalid_argument("denoise: empty noise span");
  if (end > n) throw std::invalid_argument("denoise: span exceeds utterance length");
  const std::vector<int> z = rep(noisy.alignment.phones, noisy.alignment.durations);
  if (z.size() != n) throw AlignmentError("denoise: alignment does not match frames");
  require_phones(m, z, "transcript");
  std::vector<std::uint8_t> frame_mask(n, 0);
  std::fill(frame_mask.begin() + static_cast<std::ptrdiff_t>(begin),
            frame_mask.begin() + static_cast<std::ptrdiff_t>(end), 1);
  const Array ctx = build_context(noisy.x, frame_mask);
  const SolveTrace trace = sample_audio(m, ctx, z, o);
  TaskResult out;
  out.x = noisy.x;
  const std::size_t f = noisy.x.cols();
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t c = 0; c < f; ++c) out.x.at(i, c) = trace.endpoint.at(i, c);
  }
  out.z = z;
  out.alignment = noisy.alignment;
  out.nfe = trace.nfe;
  return out;
}

TaskResult content_edit(const TaskModels& m, const Utterance& original, const EditSpec& edit,
                        const TaskOptions& o) {
  require_models(m, true);
  const PhoneAlignment& a = original.alignment;
  if (a.frame_count() != original.x.rows()) {
    throw AlignmentError("content_edit: alignment does not match frames");
  }
  if (edit.new_words.empty()) throw std::invalid_argument("content_edit: no replacement words");
  const bool begins_word = std::any_of(a.words.begin(), a.words.end(), [&](const WordSpan& w) {
    return w.begin == edit.phone_begin;
  });
  const bool ends_word = std::any_of(a.words.begin(), a.words.end(), [&](const WordSpan& w) {
    return w.end == edit.phone_end;
  });
  if (!begins_word || !ends_word || edit.phone_begin >= edit.phone_end) {
    throw AlignmentError("content_edit: span [" + std::to_string(edit.phone_begin) + ", " +
                         std::to_string(edit.phone_end) + ") is not on word boundaries");
  }

  // New phones: the replacement words separated by ghost-capable SILs.
  PhoneAlignment inserted;
  for (std::size_t w = 0; w < edit.new_words.size(); ++w) {
    if (edit.new_words[w].empty()) throw AlignmentError("content_edit: empty replacement word");
    if (w > 0) inserted.phones.push_back(PhoneInventory::kSil);
    WordSpan span{inserted.phones.size(), 0};
    for (std::size_t k = 0; k < edit.new_words[w].size(); ++k) {
      const std::size_t len = edit.new_words[w].size();
      const WordPosition pos = len == 1 ? WordPosition::kSingleton
                               : k == 0 ? WordPosition::kBegin
                               : k + 1 == len ? WordPosition::kEnd
                                              : WordPosition::kInternal;
      inserted.phones.push_back(m.inventory->id(edit.new_words[w][k], pos));
    }
    span.end = inserted.phones.size();
    inserted.words.push_back(span);
  }

  const std::size_t b = edit.phone_begin, e = edit.phone_end, k = inserted.phones.size();
  std::vector<int> y(a.phones.begin(), a.phones.begin() + static_cast<std::ptrdiff_t>(b));
  y.insert(y.end(), inserted.phones.begin(), inserted.phones.end());
  y.insert(y.end(), a.phones.begin() + static_cast<std::ptrdiff_t>(e), a.phones.end());
  std::vector<int> l_ctx(a.durations.begin(), a.durations.begin() + static_cast<std::ptrdiff_t>(b));
  l_ctx.insert(l_ctx.end(), k, 0);
  l_ctx.insert(l_ctx.end(), a.durations.begin() + static_cast<std::ptrdiff_t>(e),
               a.durations.end());
  std::vector<std::uint8_t> mask(y.size(), 0);
  std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b), k, 1);
  const std::vector<int> l = infer_durations(m, y, l_ctx, mask, o);

  // Frames: kept prefix, new region, kept suffix.
  std::size_t prefix_frames = 0, removed_frames = 0;
  for (std::size_t j = 0; j < b; ++j) prefix_frames += static_cast<std::size_t>(a.durations[j]);
  for (std::size_t j = b; j < e; ++j) removed_frames += static_cast<std::size_t>(a.durations[j]);
  std::size_t new_frames = 0;
  for (std::size_t j = b; j < b + k; ++j) new_frames += static_cast<std::size_t>(l[j]);
  const std::size_t f = original.x.cols();
  const std::size_t n = original.x.rows() - removed_frames + new_frames;
  const std::size_t suffix_start = prefix_frames + removed_frames;
  Array ctx(Shape{n, f});
  std::copy_n(original.x.data().begin(), prefix_frames * f, ctx.data().begin());
  std::copy(original.x.data().begin() + static_cast<std::ptrdiff_t>(suffix_start * f),
            original.x.data().end(),
            ctx.data().begin() + static_cast<std::ptrdiff_t>((prefix_frames + new_frames) * f));
  const std::vector<int> z = rep(y, l);
  const SolveTrace trace = sample_audio(m, ctx, z, o);

  TaskResult out;
  out.x = ctx;
  for (std::size_t i = prefix_frames; i < prefix_frames + new_frames; ++i) {
    for (std::size_t c = 0; c < f; ++c) out.x.at(i, c) = trace.endpoint.at(i, c);
  }
  out.z = z;
  out.alignment.phones = y;
  out.alignment.durations = l;
  for (const WordSpan& w : a.words) {
    if (w.end <= b) out.alignment.words.push_back(w);
  }
  for (const WordSpan& w : inserted.words) out.alignment.words.push_back({w.begin + b, w.end + b});
  for (const WordSpan& w : a.words) {
    if (w.begin >= e) out.alignment.words.push_back({w.begin - e + b + k, w.end - e + b + k});
  }
  out.nfe = trace.nfe;
  return out;
}

TaskResult diverse_sample(const TaskModels& m, const PhoneAlignment& target,
                          const TaskOptions& o) {
  require_models(m, true);
  if (target.phones.empty()) throw std::invalid_argument("diverse_sample: empty target");
  require_phones(m, target.phones, "target");
  const std::size_t mp = target.phones.size();
  const std::vector<std::uint8_t> mask(mp, 1);
  std::vector<int> l = infer_durations(m, target.phones, std::vector<int>(mp, 0), mask, o);
  trim_edge_silence(target.phones, l, m.edge_silence_frames);
  const std::vector<int> z = rep(target.phones, l);
  if (z.empty()) throw std::runtime_error("diverse_sample: predicted durations are all zero");
  const SolveTrace trace = sample_audio(m, zeros_frames(z.size(), m.audio->config().features), z, o);
  TaskResult out;
  out.x = trace.endpoint;
  out.z = z;
  out.alignment.phones = target.phones;
  out.alignment.durations = l;
  out.alignment.words = target.words;
  out.nfe = trace.nfe;
  return out;
}

TaskResult style_shuffle(const TaskModels& m, std::span<const int> z_target,
                         const TaskOptions& o) {
  require_models(m, false);
  if (z_target.empty()) throw std::invalid_argument("style_shuffle: empty target transcript");
  require_phones(m, z_target, "target transcript");
  const SolveTrace trace =
      sample_audio(m, zeros_frames(z_target.size(), m.audio->config().features), z_target, o);
  TaskResult out;
  out.x = trace.endpoint;
  out.z.assign(z_target.begin(), z_target.end());
  out.nfe = trace.nfe;
  return out;
}

}  // namespace flowfill
