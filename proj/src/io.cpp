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

#include "flowfill/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowfill {

using nlohmann::json;

void RunConfig::sync_sizes() {
  const std::size_t vocab = 2 + 5 * data.base_phones;
  audio.vocab = vocab;
  audio.features = data.features;
  duration.vocab = vocab;
}

// ---- JSON ---------------------------------------------------------------------

json to_json(const ToyProcessSpec& s) {
  return {{"features", s.features},
          {"base_phones", s.base_phones},
          {"emission_scale", s.emission_scale},
          {"mean_radius", s.mean_radius},
          {"min_mean_separation", s.min_mean_separation},
          {"style_families", s.style_families},
          {"clusters_per_family", s.clusters_per_family},
          {"style_center_norm", s.style_center_norm},
          {"style_jitter", s.style_jitter},
          {"family_hours", s.family_hours},
          {"upsample_beta", s.upsample_beta},
          {"duration_mean_min", s.duration_mean_min},
          {"duration_mean_max", s.duration_mean_max},
          {"rate_min", s.rate_min},
          {"rate_max", s.rate_max},
          {"pause_probability", s.pause_probability},
          {"pause_mean", s.pause_mean},
          {"edge_silence_probability", s.edge_silence_probability},
          {"min_words", s.min_words},
          {"max_words", s.max_words},
          {"max_word_length", s.max_word_length},
          {"noise_level", s.noise_level},
          {"frame_rate", s.frame_rate},
          {"process_seed", s.process_seed}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

ToyProcessSpec toy_spec_from_json(const json& j) {
  ToyProcessSpec s;
  read(j, "features", s.features);
  read(j, "base_phones", s.base_phones);
  read(j, "emission_scale", s.emission_scale);
  read(j, "mean_radius", s.mean_radius);
  read(j, "min_mean_separation", s.min_mean_separation);
  read(j, "style_families", s.style_families);
  read(j, "clusters_per_family", s.clusters_per_family);
  read(j, "style_center_norm", s.style_center_norm);
  read(j, "style_jitter", s.style_jitter);
  read(j, "family_hours", s.family_hours);
  read(j, "upsample_beta", s.upsample_beta);
  read(j, "duration_mean_min", s.duration_mean_min);
  read(j, "duration_mean_max", s.duration_mean_max);
  read(j, "rate_min", s.rate_min);
  read(j, "rate_max", s.rate_max);
  read(j, "pause_probability", s.pause_probability);
  read(j, "pause_mean", s.pause_mean);
  read(j, "edge_silence_probability", s.edge_silence_probability);
  read(j, "min_words", s.min_words);
  read(j, "max_words", s.max_words);
  read(j, "max_word_length", s.max_word_length);
  read(j, "noise_level", s.noise_level);
  read(j, "frame_rate", s.frame_rate);
  read(j, "process_seed", s.process_seed);
  return s;
}

json to_json(const AudioNetConfig& c) {
  return {{"features", c.features},   {"vocab", c.vocab},   {"phone_dim", c.phone_dim},
          {"width", c.width},         {"layers", c.layers}, {"heads", c.heads},
          {"ffn_width", c.ffn_width}, {"skip_connections", c.skip_connections},
          {"time_position", c.time_position}};
}

AudioNetConfig audio_config_from_json(const json& j) {
  AudioNetConfig c;
  read(j, "features", c.features);
  read(j, "vocab", c.vocab);
  read(j, "phone_dim", c.phone_dim);
  read(j, "width", c.width);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "ffn_width", c.ffn_width);
  read(j, "skip_connections", c.skip_connections);
  read(j, "time_position", c.time_position);
  return c;
}

json to_json(const DurationNetConfig& c) {
  return {{"mode", to_string(c.mode)}, {"vocab", c.vocab},         {"phone_dim", c.phone_dim},
          {"width", c.width},          {"layers", c.layers},       {"heads", c.heads},
          {"ffn_width", c.ffn_width},  {"use_context", c.use_context}};
}

DurationNetConfig duration_config_from_json(const json& j) {
  DurationNetConfig c;
  if (j.contains("mode")) c.mode = duration_mode_from_string(j.at("mode").get<std::string>());
  read(j, "vocab", c.vocab);
  read(j, "phone_dim", c.phone_dim);
  read(j, "width", c.width);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "ffn_width", c.ffn_width);
  read(j, "use_context", c.use_context);
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr_peak", c.lr_peak},
          {"warmup_steps", c.warmup_steps},
          {"grad_clip", c.grad_clip},
          {"p_uncond", c.p_uncond},
          {"loss_frames", c.loss_frames == LossFrames::kMasked ? "masked" : "all"},
          {"mask_p_drop", c.mask.p_drop},
          {"mask_min_fraction", c.mask.min_fraction},
          {"mask_max_fraction", c.mask.max_fraction},
          {"chunk_frames", c.chunk_frames},
          {"log_every", c.log_every},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  read(j, "steps", c.steps);
  read(j, "batch_size", c.batch_size);
  read(j, "lr_peak", c.lr_peak);
  read(j, "warmup_steps", c.warmup_steps);
  read(j, "grad_clip", c.grad_clip);
  read(j, "p_uncond", c.p_uncond);
  if (j.contains("loss_frames")) {
    const auto v = j.at("loss_frames").get<std::string>();
    if (v != "masked" && v != "all") throw std::invalid_argument("loss_frames: " + v);
    c.loss_frames = v == "masked" ? LossFrames::kMasked : LossFrames::kAll;
  }
  read(j, "mask_p_drop", c.mask.p_drop);
  read(j, "mask_min_fraction", c.mask.min_fraction);
  read(j, "mask_max_fraction", c.mask.max_fraction);
  read(j, "chunk_frames", c.chunk_frames);
  read(j, "log_every", c.log_every);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "seed", c.seed);
  return c;
}

json to_json(const SolverConfig& c) {
  return {{"method", to_string(c.method)}, {"step_size", c.step_size}, {"atol", c.atol},
          {"rtol", c.rtol},                {"cfg_alpha", c.cfg_alpha}};
}

SolverConfig solver_config_from_json(const json& j) {
  SolverConfig c;
  if (j.contains("method")) c.method = solver_method_from_string(j.at("method").get<std::string>());
  read(j, "step_size", c.step_size);
  read(j, "atol", c.atol);
  read(j, "rtol", c.rtol);
  read(j, "cfg_alpha", c.cfg_alpha);
  return c;
}

json to_json(const RunConfig& c) {
  return {{"data", to_json(c.data)},
          {"train_utterances", c.train_utterances},
          {"eval_utterances", c.eval_utterances},
          {"data_seed", c.data_seed},
          {"fixed_normalization", c.fixed_normalization},
          {"normalization", {{"mean", c.normalization.mean}, {"std", c.normalization.std}}},
          {"audio", to_json(c.audio)},
          {"duration", to_json(c.duration)},
          {"audio_train", to_json(c.audio_train)},
          {"duration_train", to_json(c.duration_train)},
          {"solver", to_json(c.solver)},
          {"cfg_alpha", c.cfg_alpha},
          {"sample_seed", c.sample_seed}};
}

RunConfig run_config_from_json(const json& j) {
  static const char* kKeys[] = {"data",        "train_utterances", "eval_utterances",
                                "data_seed",   "fixed_normalization", "normalization",
                                "audio",       "duration",         "audio_train",
                                "duration_train", "solver",        "cfg_alpha",
                                "sample_seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw std::invalid_argument("run config: unknown key '" + key + "'");
    }
  }
  RunConfig c;
  if (j.contains("data")) c.data = toy_spec_from_json(j.at("data"));
  read(j, "train_utterances", c.train_utterances);
  read(j, "eval_utterances", c.eval_utterances);
  read(j, "data_seed", c.data_seed);
  read(j, "fixed_normalization", c.fixed_normalization);
  if (j.contains("normalization")) {
    read(j.at("normalization"), "mean", c.normalization.mean);
    read(j.at("normalization"), "std", c.normalization.std);
  }
  if (j.contains("audio")) c.audio = audio_config_from_json(j.at("audio"));
  if (j.contains("duration")) c.duration = duration_config_from_json(j.at("duration"));
  if (j.contains("audio_train")) c.audio_train = train_config_from_json(j.at("audio_train"));
  if (j.contains("duration_train")) {
    c.duration_train = train_config_from_json(j.at("duration_train"));
  }
  if (j.contains("solver")) c.solver = solver_config_from_json(j.at("solver"));
  read(j, "cfg_alpha", c.cfg_alpha);
  read(j, "sample_seed", c.sample_seed);
  return c;
}

void write_artifact_header(std::ostream& out, const json& config) {
  out << "# " << kVersion << '\n' << "# config: " << config.dump() << '\n';
}

// ---- hex arrays -----------------------------------------------------------------

std::string encode_hex(std::span<const double> values) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(values.size() * 16);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int byte = 0; byte < 8; ++byte) {
      const auto b = static_cast<unsigned>((bits >> (8 * byte)) & 0xff);
      out.push_back(kDigits[b >> 4]);
      out.push_back(kDigits[b & 0xf]);
    }
  }
  return out;
}

std::vector<double> decode_hex(const std::string& hex) {
  if (hex.size() % 16 != 0) throw std::runtime_error("decode_hex: length not a multiple of 16");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw std::runtime_error(std::string("decode_hex: bad digit '") + c + "'");
  };
  std::vector<double> out(hex.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int byte = 0; byte < 8; ++byte) {
      const std::size_t at = 16 * i + 2 * static_cast<std::size_t>(byte);
      const std::uint64_t b = (nibble(hex[at]) << 4) | nibble(hex[at + 1]);
      bits |= b << (8 * byte);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

// ---- dataset ------------------------------------------------------------------

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const json& config_echo) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  const PhoneInventory inventory = PhoneInventory::letters(data.spec.base_phones);
  std::vector<std::string> names;
  for (std::size_t id = 0; id < inventory.vocab_size(); ++id) {
    names.push_back(inventory.name(static_cast<PhoneId>(id)));
  }
  json header = {{"format", kDatasetFormat},
                 {"version", kVersion},
                 {"config", config_echo},
                 {"spec", to_json(data.spec)},
                 {"normalization",
                  {{"mean", data.normalization.mean}, {"std", data.normalization.std}}},
                 {"phone_names", names},
                 {"records", data.records.size()}};
  out << header.dump() << '\n';
  for (const DatasetRecord& r : data.records) {
    json words = json::array();
    for (const WordSpan& w : r.alignment.words) words.push_back({w.begin, w.end});
    json rec = {{"id", r.id},
                {"frames", r.x.rows()},
                {"features", r.x.cols()},
                {"x", encode_hex(r.x.data())},
                {"phones", r.alignment.phones},
                {"durations", r.alignment.durations},
                {"words", words},
                {"style", encode_hex(r.style)},
                {"rate", r.rate},
                {"cluster", r.cluster},
                {"family", r.family}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file");
  const json header = json::parse(line);
  if (header.value("format", "") != kDatasetFormat) {
    throw std::runtime_error("load_dataset: not a flowfill dataset: " + path.string());
  }
  Dataset data;
  data.spec = toy_spec_from_json(header.at("spec"));
  data.normalization.mean = header.at("normalization").at("mean").get<double>();
  data.normalization.std = header.at("normalization").at("std").get<double>();
  const PhoneInventory inventory = PhoneInventory::letters(data.spec.base_phones);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = json::parse(line);
    DatasetRecord r;
    r.id = j.at("id").get<std::string>();
    const auto n = j.at("frames").get<std::size_t>();
    const auto f = j.at("features").get<std::size_t>();
    r.x = Array(Shape{n, f}, decode_hex(j.at("x").get<std::string>()));
    r.alignment.phones = j.at("phones").get<std::vector<int>>();
    r.alignment.durations = j.at("durations").get<std::vector<int>>();
    for (const auto& w : j.at("words")) {
      r.alignment.words.push_back({w.at(0).get<std::size_t>(), w.at(1).get<std::size_t>()});
    }
    r.style = decode_hex(j.at("style").get<std::string>());
    r.rate = j.at("rate").get<double>();
    r.cluster = j.at("cluster").get<std::size_t>();
    r.family = j.at("family").get<std::size_t>();
    try {
      r.validate(inventory);
    } catch (const AlignmentError& e) {
      throw AlignmentError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    data.records.push_back(std::move(r));
  }
  if (data.records.size() != header.at("records").get<std::size_t>()) {
    throw std::runtime_error("load_dataset: record count differs from header");
  }
  return data;
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::string read_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  return s;
}

CheckpointHeader read_header(std::istream& in, const std::filesystem::path& path) {
  const std::string magic = read_bytes(in, std::strlen(kCheckpointMagic));
  if (magic != kCheckpointMagic) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const json j = json::parse(read_bytes(in, read_u64(in)));
  return {j.at("kind").get<std::string>(), j.at("config"), j.at("model")};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const ConstParameterList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  const std::string head = json{{"version", kVersion},
                                {"kind", header.kind},
                                {"config", header.config},
                                {"model", header.model},
                                {"parameters", params.size()}}
                               .dump();
  out << kCheckpointMagic;
  write_u64(out, head.size());
  out << head;
  for (const Parameter* p : params) {
    write_u64(out, p->name.size());
    out << p->name;
    write_u64(out, p->value.rank());
    for (std::size_t d : p->value.shape()) write_u64(out, d);
    for (double v : p->value.data()) write_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_header(in, path);
}

CheckpointHeader load_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  CheckpointHeader header = read_header(in, path);
  for (Parameter* p : params) {
    const std::string name = read_bytes(in, read_u64(in));
    if (name != p->name) {
      throw std::runtime_error("checkpoint: expected parameter " + p->name + ", found " + name);
    }
    Shape shape(read_u64(in));
    for (auto& d : shape) d = read_u64(in);
    if (shape != p->value.shape()) throw ShapeError("checkpoint " + name, p->value.shape(), shape);
    for (double& v : p->value.data()) v = std::bit_cast<double>(read_u64(in));
  }
  if (in.peek() != EOF) throw std::runtime_error("checkpoint: trailing data in " + path.string());
  return header;
}

// ---- loss curves ----------------------------------------------------------------

void write_loss_csv(std::ostream& out, const TrainLog& log, std::size_t log_every) {
  out << "step,loss,grad_norm,clipped_norm,lr\n";
  const std::size_t every = std::max<std::size_t>(log_every, 1);
  for (std::size_t i = 0; i < log.points.size(); ++i) {
    if (i % every != 0 && i + 1 != log.points.size()) continue;
    const LossPoint& p = log.points[i];
    out << p.step << ',' << p.loss << ',' << p.grad_norm << ',' << p.clipped_norm << ','
        << p.lr << '\n';
  }
}

void write_loss_svg(std::ostream& out, const TrainLog& log, const std::string& title) {
  constexpr double kW = 640, kH = 360, kPad = 40;
  double lo = 0, hi = 1;
  if (!log.points.empty()) {
    lo = hi = log.points.front().loss;
    for (const auto& p : log.points) {
      lo = std::min(lo, p.loss);
      hi = std::max(hi, p.loss);
    }
  }
  if (hi <= lo) hi = lo + 1;
  const double steps = std::max<double>(1.0, static_cast<double>(log.points.size()) - 1);
  std::ostringstream pts;
  for (std::size_t i = 0; i < log.points.size(); ++i) {
    const double x = kPad + (kW - 2 * kPad) * static_cast<double>(i) / steps;
    const double y = kH - kPad - (kH - 2 * kPad) * (log.points[i].loss - lo) / (hi - lo);
    pts << x << ',' << y << ' ';
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n"
      << "<text x=\"4\" y=\"" << kPad << "\" font-size=\"10\">" << hi << "</text>\n"
      << "<text x=\"4\" y=\"" << kH - kPad << "\" font-size=\"10\">" << lo << "</text>\n"
      << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"" << pts.str()
      << "\"/>\n</svg>\n";
}

}  // namespace flowfill
