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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowfill/duration.hpp"
#include "flowfill/network.hpp"
#include "flowfill/ode_solve.hpp"
#include "flowfill/synth_data.hpp"
#include "flowfill/train.hpp"

namespace flowfill {

inline constexpr const char* kVersion = "flowfill 0.1.0";
inline constexpr const char* kDatasetFormat = "flowfill-dataset-v1";
inline constexpr const char* kCheckpointMagic = "FLOWFILL-CKPT-v1";

/// Every setting of a run. Echoed into each artifact it produces.
struct RunConfig {
  ToyProcessSpec data{};
  std::size_t train_utterances = 2000;
  std::size_t eval_utterances = 200;
  std::uint64_t data_seed = 1;
  /// Normalization applied to the generated frames; estimated when false.
  bool fixed_normalization = false;
  Normalization normalization{};
  AudioNetConfig audio{};
  DurationNetConfig duration{};
  TrainConfig audio_train{};
  TrainConfig duration_train = default_duration_train_config();
  SolverConfig solver{};
  double cfg_alpha = 0.7;
  std::uint64_t sample_seed = 0;

  /// Sets vocab and feature sizes of the networks from the data spec.
  void sync_sizes();
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ToyProcessSpec& spec);
ToyProcessSpec toy_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AudioNetConfig& config);
AudioNetConfig audio_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DurationNetConfig& config);
DurationNetConfig duration_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SolverConfig& config);
SolverConfig solver_config_from_json(const nlohmann::json& j);

/// "# flowfill 0.1.0" and "# config: {...}" lines for text artifacts.
void write_artifact_header(std::ostream& out, const nlohmann::json& config);

/// Little-endian IEEE doubles as lowercase hex.
std::string encode_hex(std::span<const double> values);
std::vector<double> decode_hex(const std::string& hex);

/// JSON-lines dataset: a header line then one record per line.
void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const nlohmann::json& config_echo);
/// Loads and re-validates every record. Throws std::runtime_error on format
/// errors and AlignmentError on invariant violations.
Dataset load_dataset(const std::filesystem::path& path);

struct CheckpointHeader {
  std::string kind;         ///< "audio" or "duration"
  nlohmann::json config;    ///< run config echo
  nlohmann::json model;     ///< network config
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const ConstParameterList& params);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);
/// Loads parameter values by name; names and shapes must match exactly.
CheckpointHeader load_checkpoint(const std::filesystem::path& path, const ParameterList& params);

/// step,loss,grad_norm,clipped_norm,lr every log_every steps and at the last step.
void write_loss_csv(std::ostream& out, const TrainLog& log, std::size_t log_every);
/// Minimal SVG polyline of loss against step.
void write_loss_svg(std::ostream& out, const TrainLog& log, const std::string& title);

}  // namespace flowfill
