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
#include <string>
#include <vector>

#include "flowfill/duration.hpp"
#include "flowfill/network.hpp"
#include "flowfill/ode_solve.hpp"
#include "flowfill/sequence.hpp"

namespace flowfill {

enum class TaskKind { kZeroShotTts, kStyleTransfer, kDenoise, kEdit, kSample, kStyleShuffle };

std::string to_string(TaskKind kind);

/// Trained models plus the token space they were trained on.
struct TaskModels {
  const AudioVectorField* audio = nullptr;
  const DurationModel* duration = nullptr;
  const PhoneInventory* inventory = nullptr;
  /// Leading/trailing SIL predictions are capped at this many frames.
  int edge_silence_frames = 2;
};

struct TaskOptions {
  /// Midpoint, h = 0.0625, guidance 0.7.
  SolverConfig audio_solver = [] {
    SolverConfig c;
    c.cfg_alpha = 0.7;
    return c;
  }();
  SolverConfig duration_solver{};
  /// Predict target durations given the reference durations as context. When
  /// false all durations are predicted without context.
  bool condition_durations = true;
  std::uint64_t seed = 0;
};

struct Utterance {
  Array x;                   ///< normalized frames [N, F]
  PhoneAlignment alignment;
};

struct TaskResult {
  Array x;                   ///< generated (or spliced) frames
  std::vector<int> z;        ///< frame-level transcript of x
  PhoneAlignment alignment;  ///< phones and durations of x
  std::size_t nfe = 0;
};

/// Generates speech for target (durations ignored) in the style of reference.
/// Returns only the generated continuation.
TaskResult zero_shot_tts(const TaskModels& models, const Utterance& reference,
                         const PhoneAlignment& target, const TaskOptions& options);

/// Renders the frame-level transcript z_target in the style of reference.
TaskResult style_transfer(const TaskModels& models, const Utterance& reference,
                          std::span<const int> z_target, const TaskOptions& options);

/// Regenerates frames [begin, end) of a noisy utterance from its transcript.
TaskResult denoise(const TaskModels& models, const Utterance& noisy, std::size_t begin,
                   std::size_t end, const TaskOptions& options);

/// Replaces the whole words covering phones [phone_begin, phone_end) with new
/// words given as base phone ids.
struct EditSpec {
  std::size_t phone_begin = 0;
  std::size_t phone_end = 0;
  std::vector<std::vector<std::size_t>> new_words;
};

TaskResult content_edit(const TaskModels& models, const Utterance& original,
                        const EditSpec& edit, const TaskOptions& options);

/// Samples durations and audio for target with no context at all.
TaskResult diverse_sample(const TaskModels& models, const PhoneAlignment& target,
                          const TaskOptions& options);

/// Samples audio for a fixed frame-level transcript with no audio context.
TaskResult style_shuffle(const TaskModels& models, std::span<const int> z_target,
                         const TaskOptions& options);

}  // namespace flowfill
