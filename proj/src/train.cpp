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

#include "flowfill/train.hpp"

#include <cmath>

namespace flowfill {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("TrainConfig: " + what); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lr_peak > 0.0)) fail("lr_peak must be positive");
  if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
  if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) fail("p_uncond must lie in [0, 1]");
  if (!(mask.p_drop >= 0.0 && mask.p_drop <= 1.0)) fail("mask p_drop must lie in [0, 1]");
  if (!(mask.min_fraction > 0.0 && mask.min_fraction <= mask.max_fraction &&
        mask.max_fraction <= 1.0)) {
    fail("mask fractions must satisfy 0 < min <= max <= 1");
  }
  if (chunk_frames == 0) fail("chunk_frames must be positive");
}

TrainConfig default_duration_train_config() {
  TrainConfig c;
  c.mask = MaskPolicy::for_kind(MaskKind::kDuration);
  return c;
}

TrainLog train_loop(const ParameterList& params, const LossBuilder& loss,
                    const TrainConfig& config, const CheckpointHook& checkpoint) {
  config.validate();
  Rng rng(config.seed, 0x7a11);
  Adam adam;
  const LinearWarmupDecay schedule{config.lr_peak, config.warmup_steps, config.steps};
  TrainLog log;
  long last_checkpoint = -1;
  for (std::size_t step = 0; step < config.steps; ++step) {
    Tape tape;
    for (Parameter* p : params) tape.watch(*p);
    const Var l = loss(tape, rng);
    const double value = l.value().item();
    if (!std::isfinite(value)) {
      throw TrainingAborted("training: non-finite loss at step " + std::to_string(step), step,
                            last_checkpoint);
    }
    Gradients grads = tape.backward(l);
    LossPoint point;
    point.step = step;
    point.loss = value;
    point.grad_norm = grads.global_norm();
    if (!std::isfinite(point.grad_norm)) {
      throw TrainingAborted("training: non-finite gradient at step " + std::to_string(step),
                            step, last_checkpoint);
    }
    point.clipped_norm = clip_grad_norm(grads, config.grad_clip);
    point.lr = schedule.at(step);
    adam.step(params, grads, point.lr);
    log.points.push_back(point);
    if (checkpoint && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      checkpoint(step + 1);
      last_checkpoint = static_cast<long>(step + 1);
    }
  }
  return log;
}

CfmBatch sample_audio_batch(const Dataset& data, const TrainConfig& config, Rng& rng) {
  if (data.records.empty()) throw std::invalid_argument("sample_audio_batch: empty dataset");
  CfmBatch batch;
  for (std::size_t b = 0; b < config.batch_size; ++b) {
    const DatasetRecord& rec = data.records[rng.below(data.records.size())];
    auto [x, alignment] = chunk_utterance(rec.x, rec.alignment, config.chunk_frames, rng);
    MaskPair mask = sample_training_mask(alignment, MaskKind::kAudio, config.mask, rng);
    if (mask.masked_frames() == 0) std::fill(mask.frame.begin(), mask.frame.end(), 1);
    Array ctx = build_context(x, mask.frame);
    CfmItem item = make_cfm_item(std::move(x), std::move(ctx),
                                 rep(alignment.phones, alignment.durations),
                                 std::move(mask.frame), rng);
    drop_conditioning(item, config.p_uncond, rng, PhoneInventory::kNull);
    batch.push_back(std::move(item));
  }
  return batch;
}

std::vector<DurationItem> sample_duration_batch(const Dataset& data, const TrainConfig& config,
                                                Rng& rng) {
  if (data.records.empty()) throw std::invalid_argument("sample_duration_batch: empty dataset");
  std::vector<DurationItem> batch;
  for (std::size_t b = 0; b < config.batch_size; ++b) {
    const DatasetRecord& rec = data.records[rng.below(data.records.size())];
    MaskPair mask = sample_training_mask(rec.alignment, MaskKind::kDuration, config.mask, rng);
    batch.push_back(make_duration_item(rec.alignment.phones, rec.alignment.durations,
                                       std::move(mask.phone), &rng));
  }
  return batch;
}

TrainLog train_audio(AudioVectorField& model, const Dataset& data, const TrainConfig& config,
                     const CheckpointHook& checkpoint) {
  const OtPath path;
  auto loss = [&](Tape& tape, Rng& rng) {
    return cfm_loss(tape, model, sample_audio_batch(data, config, rng), path, config.loss_frames);
  };
  return train_loop(model.parameters(), loss, config, checkpoint);
}

TrainLog train_duration(DurationModel& model, const Dataset& data, const TrainConfig& config,
                        const CheckpointHook& checkpoint) {
  const OtPath path;
  auto loss = [&](Tape& tape, Rng& rng) {
    const std::vector<DurationItem> items = sample_duration_batch(data, config, rng);
    if (model.mode() == DurationMode::kRegression) {
      return loss_duration_regression(tape, model, items);
    }
    CfmBatch batch = duration_cfm_batch(items, rng);
    drop_conditioning(batch, config.p_uncond, rng, model.field().null_token());
    return cfm_loss(tape, model.field(), batch, path, LossFrames::kMasked);
  };
  return train_loop(model.parameters(), loss, config, checkpoint);
}

double evaluate_audio_loss(const AudioVectorField& model, const Dataset& data,
                           const TrainConfig& config, std::size_t batches, std::uint64_t seed) {
  const OtPath path;
  Rng rng(seed, 0xe7a1);
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    total += cfm_loss_value(model, sample_audio_batch(data, config, rng), path,
                            config.loss_frames);
  }
  return total / static_cast<double>(batches);
}

}  // namespace flowfill
