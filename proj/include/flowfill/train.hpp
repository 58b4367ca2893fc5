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
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowfill/duration.hpp"
#include "flowfill/network.hpp"
#include "flowfill/sequence.hpp"
#include "flowfill/synth_data.hpp"

namespace flowfill {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr_peak = 1e-4;
  std::size_t warmup_steps = 100;
  double grad_clip = 0.2;
  double p_uncond = 0.2;
  LossFrames loss_frames = LossFrames::kMasked;
  MaskPolicy mask = MaskPolicy::for_kind(MaskKind::kAudio);
  /// Utterances longer than this are cut to a random window.
  std::size_t chunk_frames = 1600;
  std::size_t log_every = 50;
  /// 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Audio defaults with the duration mask policy.
TrainConfig default_duration_train_config();

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;      ///< before clipping
  double clipped_norm = 0.0;   ///< after clipping
  double lr = 0.0;
};

struct TrainLog {
  std::vector<LossPoint> points;  ///< one per step
};

/// Thrown when a step produces a non-finite loss or gradient.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::size_t step, long last_checkpoint_step)
      : std::runtime_error(what), step_(step), last_checkpoint_(last_checkpoint_step) {}
  std::size_t step() const { return step_; }
  /// Step of the last checkpoint written, or -1.
  long last_checkpoint_step() const { return last_checkpoint_; }

 private:
  std::size_t step_;
  long last_checkpoint_;
};

/// Builds the loss of one minibatch on the given tape.
using LossBuilder = std::function<Var(Tape& tape, Rng& rng)>;
/// Called after step s (1-based count) when s % checkpoint_every == 0.
using CheckpointHook = std::function<void(std::size_t steps_done)>;

/// Adam with linear warmup/decay and global-norm clipping.
TrainLog train_loop(const ParameterList& params, const LossBuilder& loss,
                    const TrainConfig& config, const CheckpointHook& checkpoint = {});

/// One audio training minibatch: random records, chunking, the training mask,
/// context assembly, t and x0 draws, then conditioning dropout.
CfmBatch sample_audio_batch(const Dataset& data, const TrainConfig& config, Rng& rng);

/// One duration training minibatch with dequantized targets.
std::vector<DurationItem> sample_duration_batch(const Dataset& data, const TrainConfig& config,
                                                Rng& rng);

TrainLog train_audio(AudioVectorField& model, const Dataset& data, const TrainConfig& config,
                     const CheckpointHook& checkpoint = {});
TrainLog train_duration(DurationModel& model, const Dataset& data, const TrainConfig& config,
                        const CheckpointHook& checkpoint = {});

/// Mean loss over fixed evaluation batches drawn from seed.
double evaluate_audio_loss(const AudioVectorField& model, const Dataset& data,
                           const TrainConfig& config, std::size_t batches, std::uint64_t seed);

}  // namespace flowfill
