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

// Command-line driver: data generation, training, the inference tasks,
// evaluation, NFE sweeps and the loss-region ablation. Artifacts go under the
// output root (--out, else $FLOWFILL_OUT, else ./flowfill-out), and each one
// starts with the version and the full run configuration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "CLI11.hpp"
#include "flowfill/duration.hpp"
#include "flowfill/io.hpp"
#include "flowfill/metrics.hpp"
#include "flowfill/network.hpp"
#include "flowfill/ode_solve.hpp"
#include "flowfill/synth_data.hpp"
#include "flowfill/tasks.hpp"
#include "flowfill/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace flowfill {
namespace {

struct Session {
  fs::path out;
  RunConfig config;

  json echo() const { return to_json(config); }
  fs::path path(const std::string& name) const { return out / name; }
  fs::path train_data() const { return path("train.jsonl"); }
  fs::path eval_data() const { return path("eval.jsonl"); }
  fs::path audio_checkpoint() const { return path("audio.ckpt"); }
  fs::path duration_checkpoint() const { return path("duration.ckpt"); }
};

// Text artifact with the version/config header already written.
std::ofstream open_artifact(const Session& s, const std::string& name) {
  std::ofstream out(s.path(name));
  if (!out) throw std::runtime_error("cannot write " + s.path(name).string());
  write_artifact_header(out, s.echo());
  return out;
}

std::unique_ptr<AudioVectorField> load_audio(const fs::path& path) {
  const CheckpointHeader header = read_checkpoint_header(path);
  if (header.kind != "audio") throw std::runtime_error(path.string() + " is not an audio checkpoint");
  Rng rng(0);
  auto model = std::make_unique<AudioVectorField>(audio_config_from_json(header.model), rng);
  load_checkpoint(path, model->parameters());
  return model;
}

std::unique_ptr<DurationModel> load_duration(const fs::path& path) {
  const CheckpointHeader header = read_checkpoint_header(path);
  if (header.kind != "duration") {
    throw std::runtime_error(path.string() + " is not a duration checkpoint");
  }
  Rng rng(0);
  auto model = std::make_unique<DurationModel>(duration_config_from_json(header.model), rng);
  load_checkpoint(path, model->parameters());
  return model;
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw std::runtime_error(path.string() + " not found; run `" + hint + "` first");
}

// Models and data needed by every inference subcommand.
struct Workbench {
  Dataset eval;
  ToyProcess process;
  PhoneClassifier classifier;
  StyleEmbedder embedder;
  std::unique_ptr<AudioVectorField> audio;
  std::unique_ptr<DurationModel> duration;

  explicit Workbench(const Session& s)
      : eval(load_eval(s)),
        process(eval.spec),
        classifier(process, eval.normalization),
        embedder(classifier) {
    require_file(s.audio_checkpoint(), "flowfill train");
    audio = load_audio(s.audio_checkpoint());
    if (fs::exists(s.duration_checkpoint())) duration = load_duration(s.duration_checkpoint());
  }

  static Dataset load_eval(const Session& s) {
    require_file(s.eval_data(), "flowfill gen-data");
    return load_dataset(s.eval_data());
  }

  TaskModels models(bool need_duration) const {
    if (need_duration && !duration) {
      throw std::runtime_error("this task needs duration.ckpt; run `flowfill train --what both`");
    }
    return TaskModels{audio.get(), duration.get(), &process.inventory(), 2};
  }

  const DatasetRecord& record(std::size_t i) const { return eval.records.at(i % eval.records.size()); }
};

TaskOptions task_options(const RunConfig& c, std::uint64_t seed) {
  TaskOptions o;
  o.audio_solver = c.solver;
  o.audio_solver.cfg_alpha = c.cfg_alpha;
  o.seed = seed;
  return o;
}

DatasetRecord as_record(const std::string& id, const TaskResult& r, const PhoneAlignment& alignment) {
  DatasetRecord rec;
  rec.id = id;
  rec.x = r.x;
  rec.alignment = alignment;
  return rec;
}

void save_generated(const Session& s, const Workbench& w, const std::string& name,
                    std::vector<DatasetRecord> records) {
  Dataset out;
  out.spec = w.eval.spec;
  out.normalization = w.eval.normalization;
  out.records = std::move(records);
  save_dataset(s.path(name), out, s.echo());
}

void save_metrics(const Session& s, const std::string& name, const std::vector<MetricRow>& rows) {
  std::ofstream out = open_artifact(s, name);
  write_metrics_csv(out, rows);
}

// Pairs for zero-shot trials: prompt from the first half of the eval set,
// content from the second half.
std::pair<const DatasetRecord*, const DatasetRecord*> tts_pair(const Workbench& w, std::size_t i) {
  const std::size_t half = std::max<std::size_t>(1, w.eval.records.size() / 2);
  return {&w.eval.records.at(i % half), &w.eval.records.at(half + i % (w.eval.records.size() - half))};
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Session& s) {
  const RunConfig& c = s.config;
  const Normalization* fixed = c.fixed_normalization ? &c.normalization : nullptr;
  const Dataset train = generate_dataset(c.data, c.train_utterances, c.data_seed, fixed);
  const Dataset eval =
      generate_dataset(c.data, c.eval_utterances, c.data_seed + 1, &train.normalization);
  save_dataset(s.train_data(), train, s.echo());
  save_dataset(s.eval_data(), eval, s.echo());
  std::cout << "wrote " << train.records.size() << " training and " << eval.records.size()
            << " evaluation utterances to " << s.out << "\n";
}

void write_loss(const Session& s, const std::string& stem, const TrainLog& log,
                const TrainConfig& tc) {
  {
    std::ofstream out = open_artifact(s, stem + "_loss.csv");
    write_loss_csv(out, log, tc.log_every);
  }
  std::ofstream svg(s.path(stem + "_loss.svg"));
  svg << "<!-- " << kVersion << " config: " << s.echo().dump() << " -->\n";
  write_loss_svg(svg, log, stem + " loss");
}

void cmd_train(const Session& s, const std::string& what) {
  require_file(s.train_data(), "flowfill gen-data");
  const Dataset train = load_dataset(s.train_data());
  const RunConfig& c = s.config;
  if (what == "audio" || what == "both") {
    Rng rng(c.audio_train.seed);
    AudioVectorField model(c.audio, rng);
    const TrainLog log = train_audio(model, train, c.audio_train, [&](std::size_t step) {
      save_checkpoint(s.path("audio_step" + std::to_string(step) + ".ckpt"),
                      {"audio", s.echo(), to_json(c.audio)}, std::as_const(model).parameters());
    });
    save_checkpoint(s.audio_checkpoint(), {"audio", s.echo(), to_json(c.audio)},
                    std::as_const(model).parameters());
    write_loss(s, "audio", log, c.audio_train);
    std::cout << "audio model: " << log.points.size() << " steps, final loss "
              << log.points.back().loss << "\n";
  }
  if (what == "duration" || what == "both") {
    Rng rng(c.duration_train.seed);
    DurationModel model(c.duration, rng);
    const TrainLog log = train_duration(model, train, c.duration_train);
    save_checkpoint(s.duration_checkpoint(), {"duration", s.echo(), to_json(c.duration)},
                    std::as_const(model).parameters());
    write_loss(s, "duration", log, c.duration_train);
    std::cout << "duration model: " << log.points.size() << " steps, final loss "
              << log.points.back().loss << "\n";
  }
}

void cmd_sample(const Session& s, std::size_t count) {
  const Workbench w(s);
  std::vector<DatasetRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    const DatasetRecord& content = w.record(i);
    PhoneAlignment target = content.alignment;
    const TaskResult r = diverse_sample(w.models(true), target, task_options(s.config, s.config.sample_seed + i));
    out.push_back(as_record("sample-" + std::to_string(i), r, r.alignment));
  }
  save_generated(s, w, "sample.jsonl", std::move(out));
}

void cmd_tts(const Session& s, std::size_t count) {
  const Workbench w(s);
  std::vector<DatasetRecord> out;
  std::vector<MetricRow> rows;
  double sim = 0.0, errors = 0.0, frames = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto [prompt, content] = tts_pair(w, i);
    const TaskResult r = zero_shot_tts(w.models(true), Utterance{prompt->x, prompt->alignment},
                                       content->alignment, task_options(s.config, s.config.sample_seed + i));
    sim += style_similarity(w.embedder, r.x, prompt->x);
    errors += phone_error_rate(w.classifier, r.x, r.z) * static_cast<double>(r.z.size());
    frames += static_cast<double>(r.z.size());
    out.push_back(as_record("tts-" + std::to_string(i), r, r.alignment));
  }
  rows.push_back({"style_similarity", "tts", sim / static_cast<double>(count), count});
  rows.push_back({"per", "tts", errors / frames, count});
  save_generated(s, w, "tts.jsonl", std::move(out));
  save_metrics(s, "tts_metrics.csv", rows);
}

void cmd_transfer(const Session& s, std::size_t count) {
  const Workbench w(s);
  std::vector<DatasetRecord> out;
  double sim = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto [reference, content] = tts_pair(w, i);
    const std::vector<int> z = rep(content->alignment.phones, content->alignment.durations);
    const TaskResult r = style_transfer(w.models(false), Utterance{reference->x, reference->alignment}, z,
                                        task_options(s.config, s.config.sample_seed + i));
    sim += style_similarity(w.embedder, r.x, reference->x);
    out.push_back(as_record("transfer-" + std::to_string(i), r, content->alignment));
  }
  save_generated(s, w, "transfer.jsonl", std::move(out));
  save_metrics(s, "transfer_metrics.csv",
               {{"style_similarity", "transfer", sim / static_cast<double>(count), count}});
}

void cmd_denoise(const Session& s, std::size_t count, double snr_db) {
  const Workbench w(s);
  std::vector<DatasetRecord> out;
  double correct = 0.0, span = 0.0;
  Rng noise(s.config.sample_seed + 17);
  for (std::size_t i = 0; i < count; ++i) {
    const DatasetRecord& rec = w.record(i);
    const std::size_t n = rec.x.rows(), begin = n / 4, end = (3 * n) / 4;
    double power = 0.0;
    for (double v : rec.x.data()) power += v * v;
    const double sigma = std::sqrt(power / static_cast<double>(rec.x.size()) / std::pow(10.0, snr_db / 10.0));
    Array noisy = rec.x;
    for (std::size_t r = begin; r < end; ++r) {
      for (double& v : noisy.row(r)) v += sigma * noise.normal();
    }
    const TaskResult r = denoise(w.models(false), Utterance{noisy, rec.alignment}, begin, end,
                                 task_options(s.config, s.config.sample_seed + i));
    const auto decoded = w.classifier.classify(r.x);
    for (std::size_t k = begin; k < end; ++k) {
      correct += decoded[k] == w.process.inventory().acoustic_class(r.z[k]);
    }
    span += static_cast<double>(end - begin);
    out.push_back(as_record("denoise-" + std::to_string(i), r, r.alignment));
  }
  save_generated(s, w, "denoise.jsonl", std::move(out));
  save_metrics(s, "denoise_metrics.csv", {{"span_accuracy", "denoise", correct / span, count}});
}

// Replaces the middle word of each utterance with a random word of the same length.
void cmd_edit(const Session& s, std::size_t count) {
  const Workbench w(s);
  std::vector<DatasetRecord> out;
  Rng pick(s.config.sample_seed + 29);
  for (std::size_t i = 0; i < count; ++i) {
    const DatasetRecord& rec = w.record(i);
    const WordSpan word = rec.alignment.words.at(rec.alignment.words.size() / 2);
    std::vector<std::size_t> replacement;
    for (std::size_t k = 0; k < word.size(); ++k) {
      replacement.push_back(pick.below(w.process.inventory().base_count()));
    }
    const EditSpec edit{word.begin, word.end, {replacement}};
    const TaskResult r = content_edit(w.models(true), Utterance{rec.x, rec.alignment}, edit,
                                      task_options(s.config, s.config.sample_seed + i));
    out.push_back(as_record("edit-" + std::to_string(i), r, r.alignment));
  }
  save_generated(s, w, "edit.jsonl", std::move(out));
}

void cmd_shuffle(const Session& s, std::size_t count) {
  const Workbench w(s);
  std::vector<DatasetRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    const DatasetRecord& rec = w.record(i);
    const std::vector<int> z = rep(rec.alignment.phones, rec.alignment.durations);
    const TaskResult r = style_shuffle(w.models(false), z, task_options(s.config, s.config.sample_seed + i));
    out.push_back(as_record("shuffle-" + std::to_string(i), r, rec.alignment));
  }
  save_generated(s, w, "shuffle.jsonl", std::move(out));
}

// Audio metrics of a generated file against the evaluation set, plus duration
// metrics on second-half infilling when a duration model is present.
void cmd_eval(const Session& s, const fs::path& generated_path) {
  const Workbench w(s);
  const Dataset generated = load_dataset(generated_path);
  std::vector<MetricRow> rows;
  std::vector<Array> gen, ref;
  double errors = 0.0, frames = 0.0;
  for (const DatasetRecord& r : generated.records) {
    gen.push_back(r.x);
    const std::vector<int> z = rep(r.alignment.phones, r.alignment.durations);
    errors += phone_error_rate(w.classifier, r.x, z) * static_cast<double>(z.size());
    frames += static_cast<double>(z.size());
  }
  for (const DatasetRecord& r : w.eval.records) ref.push_back(r.x);
  rows.push_back({"per", "generated", errors / frames, gen.size()});
  if (gen.size() >= 32 && ref.size() >= 32) {
    rows.push_back({"fsd", "generated", fsd_analog(gen, ref), gen.size()});
  } else {
    std::cerr << "note: fsd needs at least 32 utterances per side, skipped\n";
  }

  if (w.duration) {
    std::vector<std::vector<double>> predictions;
    std::vector<std::vector<int>> targets, contexts;
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<double> phn_sampled, phn_ref, sil_sampled, sil_ref;
    Rng rng(s.config.sample_seed);
    for (const DatasetRecord& r : w.eval.records) {
      const auto& a = r.alignment;
      std::vector<std::uint8_t> mask(a.phones.size(), 0);
      std::fill(mask.begin() + static_cast<std::ptrdiff_t>(a.phones.size() / 2), mask.end(), 1);
      const auto l = predict_durations(*w.duration, a.phones, a.durations, mask, w.duration->mode(),
                                       SolverConfig{}, rng);
      for (std::size_t j = 0; j < l.size(); ++j) {
        if (!mask[j]) continue;
        const bool sil = w.process.inventory().is_sil(a.phones[j]);
        (sil ? sil_sampled : phn_sampled).push_back(l[j]);
        (sil ? sil_ref : phn_ref).push_back(a.durations[j]);
      }
      predictions.emplace_back(l.begin(), l.end());
      targets.push_back(a.durations);
      contexts.push_back(a.durations);
      masks.push_back(std::move(mask));
    }
    const std::size_t n = w.eval.records.size();
    rows.push_back({"ms_mae", "duration", ms_mae(predictions, targets, masks), n});
    if (const auto corr = ms_corr(predictions, contexts, masks)) {
      rows.push_back({"ms_corr", "duration", *corr, n});
    }
    rows.push_back({"phn_fdd", "duration", fdd(phn_sampled, phn_ref), phn_ref.size()});
    rows.push_back({"sil_fdd", "duration", fdd(sil_sampled, sil_ref), sil_ref.size()});
  }
  save_metrics(s, "eval_metrics.csv", rows);
  for (const MetricRow& r : rows) std::cout << r.metric << " " << r.split << " " << r.value << "\n";
}

// Zero-shot TTS over the evaluation pairs for every (nfe, alpha) cell.
void cmd_sweep(const Session& s, const std::vector<std::size_t>& nfe_list,
               const std::vector<double>& alpha_list, const std::vector<std::string>& metrics,
               std::size_t count) {
  const Workbench w(s);
  std::vector<Array> reference;
  for (const DatasetRecord& r : w.eval.records) reference.push_back(r.x);
  const SweepEvaluator evaluate = [&](const SolverConfig& solver) {
    SweepCell cell;
    std::vector<Array> generated;
    double sim = 0.0, errors = 0.0, frames = 0.0, wall = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto [prompt, content] = tts_pair(w, i);
      TaskOptions o = task_options(s.config, s.config.sample_seed + i);
      o.audio_solver = solver;
      const auto start = std::chrono::steady_clock::now();
      const TaskResult r = zero_shot_tts(w.models(true), Utterance{prompt->x, prompt->alignment},
                                         content->alignment, o);
      wall += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      cell.nfe = r.nfe;
      sim += style_similarity(w.embedder, r.x, prompt->x);
      errors += phone_error_rate(w.classifier, r.x, r.z) * static_cast<double>(r.z.size());
      frames += static_cast<double>(r.z.size());
      generated.push_back(r.x);
    }
    cell.wall_time_ms = wall / static_cast<double>(count);
    for (const std::string& m : metrics) {
      if (m == "fsd") {
        cell.metrics.push_back({m, fsd_analog(generated, reference)});
      } else if (m == "per") {
        cell.metrics.push_back({m, errors / frames});
      } else if (m == "sim") {
        cell.metrics.push_back({m, sim / static_cast<double>(count)});
      }
    }
    return cell;
  };
  const SolverMethod method = s.config.solver.method;
  const auto rows = nfe_sweep(evaluate, nfe_list, alpha_list, method);
  std::ofstream out = open_artifact(s, "sweep.csv");
  write_sweep_csv(out, rows);
  std::cout << "wrote " << rows.size() << " rows to " << s.path("sweep.csv") << "\n";
}

void cmd_ablate(Session s, std::size_t trials) {
  require_file(s.train_data(), "flowfill gen-data");
  const Dataset train = load_dataset(s.train_data());
  const Dataset eval = Workbench::load_eval(s);
  const ToyProcess process(eval.spec);
  const PhoneClassifier classifier(process, eval.normalization);
  const StyleEmbedder embedder(classifier);

  Rng drng(s.config.duration_train.seed);
  DurationModel duration(s.config.duration, drng);
  train_duration(duration, train, s.config.duration_train);

  std::vector<MetricRow> rows;
  for (LossFrames frames : {LossFrames::kMasked, LossFrames::kAll}) {
    const std::string name = frames == LossFrames::kMasked ? "masked" : "all";
    TrainConfig tc = s.config.audio_train;
    tc.loss_frames = frames;
    Rng rng(tc.seed);
    AudioVectorField model(s.config.audio, rng);
    const TrainLog log = train_audio(model, train, tc);
    save_checkpoint(s.path("ablate_" + name + ".ckpt"), {"audio", s.echo(), to_json(s.config.audio)},
                    std::as_const(model).parameters());
    write_loss(s, "ablate_" + name, log, tc);

    const TaskModels models{&model, &duration, &process.inventory(), 2};
    const std::size_t half = eval.records.size() / 2;
    double sim = 0.0, other_sim = 0.0, errors = 0.0, count = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng pick(7000 + t);
      const DatasetRecord& prompt = eval.records[pick.below(half)];
      const DatasetRecord& content = eval.records[half + pick.below(eval.records.size() - half)];
      const DatasetRecord* other = &eval.records[pick.below(eval.records.size())];
      for (int guard = 0; other->cluster == prompt.cluster && guard < 1000; ++guard) {
        other = &eval.records[pick.below(eval.records.size())];
      }
      const TaskResult r = zero_shot_tts(models, Utterance{prompt.x, prompt.alignment}, content.alignment,
                                         task_options(s.config, s.config.sample_seed + t));
      sim += style_similarity(embedder, r.x, prompt.x);
      other_sim += style_similarity(embedder, r.x, other->x);
      errors += phone_error_rate(classifier, r.x, r.z) * static_cast<double>(r.z.size());
      count += static_cast<double>(r.z.size());
    }
    rows.push_back({"style_similarity", name, sim / static_cast<double>(trials), trials});
    rows.push_back({"other_similarity", name, other_sim / static_cast<double>(trials), trials});
    rows.push_back({"per", name, errors / count, trials});
    std::cout << name << ": style similarity " << sim / static_cast<double>(trials) << "\n";
  }
  save_metrics(s, "ablate_mask_loss.csv", rows);
  const bool direction = rows[0].value >= rows[3].value;
  std::cout << "masked " << (direction ? ">=" : "<") << " all on style similarity\n";
}

fs::path default_out() {
  if (const char* env = std::getenv("FLOWFILL_OUT"); env != nullptr && *env != '\0') return env;
  return "flowfill-out";
}

}  // namespace
}  // namespace flowfill

int main(int argc, char** argv) {
  using namespace flowfill;
  CLI::App app{"flowfill: flow-matching speech infilling on a toy speech process"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::string out_dir, config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  app.add_option("--out", out_dir, "Output root (default $FLOWFILL_OUT or ./flowfill-out)");
  app.add_option("--config", config_path, "RunConfig JSON file")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "Generate training and evaluation datasets");
  std::optional<std::size_t> n, eval_n;
  gen->add_option("--seed", seed, "Data seed");
  gen->add_option("--n", n, "Training utterances");
  gen->add_option("--eval-n", eval_n, "Evaluation utterances");

  auto* train = app.add_subcommand("train", "Train the audio and/or duration model");
  std::string what = "both", loss_frames;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  train->add_option("--what", what, "audio, duration or both")
      ->check(CLI::IsMember({"audio", "duration", "both"}));
  train->add_option("--steps", steps, "Optimizer steps (both models)");
  train->add_option("--lr", lr, "Peak learning rate of the audio model");
  train->add_option("--loss", loss_frames, "Audio loss region")->check(CLI::IsMember({"masked", "all"}));
  train->add_option("--seed", seed, "Training seed");

  std::size_t count = 8;
  double snr = 0.0;
  std::string generated;
  auto task = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--count", count, "Number of items")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Sampling seed");
    sub->add_option("--alpha", alpha, "Guidance strength");
    return sub;
  };
  auto* sample = task("sample", "Diverse sampling from transcripts alone");
  auto* tts = task("tts", "Zero-shot TTS from a prompt");
  auto* transfer = task("transfer", "Style transfer onto another transcript");
  auto* den = task("denoise", "Regenerate a corrupted span");
  den->add_option("--snr", snr, "Corruption SNR in dB");
  auto* edit = task("edit", "Replace the middle word of each utterance");
  auto* shuffle = task("shuffle", "Sample with random style");

  auto* eval = app.add_subcommand("eval", "Metrics of a generated dataset file");
  eval->add_option("--generated", generated, "Generated JSON-lines file")->required();

  auto* sweep = app.add_subcommand("sweep", "Metric and wall time over NFE and guidance");
  std::vector<std::size_t> nfe_list = {2, 4, 8, 16, 32};
  std::vector<double> alpha_list = {0.0, 0.3, 0.7, 1.0};
  std::vector<std::string> metrics = {"fsd"};
  std::size_t sweep_count = 32;
  sweep->add_option("--nfe", nfe_list, "Unguided evaluation counts")->delimiter(',');
  sweep->add_option("--alpha", alpha_list, "Guidance strengths")->delimiter(',');
  sweep->add_option("--metrics", metrics, "fsd, per, sim")
      ->delimiter(',')
      ->check(CLI::IsMember({"fsd", "per", "sim"}));
  sweep->add_option("--count", sweep_count, "Utterances per cell (fsd needs 32)");
  sweep->add_option("--seed", seed, "Sampling seed");

  auto* ablate = app.add_subcommand("ablate-mask-loss", "Masked versus all-frame loss");
  std::size_t trials = 50;
  ablate->add_option("--steps", steps, "Audio training steps per arm");
  ablate->add_option("--trials", trials, "Zero-shot trials per arm");
  ablate->add_option("--seed", seed, "Training seed shared by both arms");

  CLI11_PARSE(app, argc, argv);

  try {
    Session s;
    s.out = out_dir.empty() ? default_out() : fs::path(out_dir);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      s.config = run_config_from_json(nlohmann::json::parse(in));
    } else if (fs::exists(s.out / "config.json") && !gen->parsed()) {
      std::ifstream in(s.out / "config.json");
      s.config = run_config_from_json(nlohmann::json::parse(in));
    }
    RunConfig& c = s.config;
    if (gen->parsed()) {
      if (seed) c.data_seed = *seed;
      if (n) c.train_utterances = *n;
      if (eval_n) c.eval_utterances = *eval_n;
    } else if (train->parsed() || ablate->parsed()) {
      if (seed) c.audio_train.seed = c.duration_train.seed = *seed;
      if (steps) c.audio_train.steps = c.duration_train.steps = *steps;
      if (lr) c.audio_train.lr_peak = *lr;
      if (!loss_frames.empty()) {
        c.audio_train.loss_frames = loss_frames == "all" ? LossFrames::kAll : LossFrames::kMasked;
      }
      for (TrainConfig* tc : {&c.audio_train, &c.duration_train}) {
        tc->warmup_steps = std::min(tc->warmup_steps, tc->steps);
      }
    } else if (seed) {
      c.sample_seed = *seed;
    }
    if (alpha) c.cfg_alpha = *alpha;
    c.sync_sizes();
    c.audio_train.validate();
    c.duration_train.validate();
    c.solver.validate();

    fs::create_directories(s.out);
    {
      std::ofstream cfg(s.out / "config.json");
      cfg << to_json(c).dump(2) << "\n";
    }

    if (gen->parsed()) cmd_gen_data(s);
    else if (train->parsed()) cmd_train(s, what);
    else if (sample->parsed()) cmd_sample(s, count);
    else if (tts->parsed()) cmd_tts(s, count);
    else if (transfer->parsed()) cmd_transfer(s, count);
    else if (den->parsed()) cmd_denoise(s, count, snr);
    else if (edit->parsed()) cmd_edit(s, count);
    else if (shuffle->parsed()) cmd_shuffle(s, count);
    else if (eval->parsed()) cmd_eval(s, generated);
    else if (sweep->parsed()) cmd_sweep(s, nfe_list, alpha_list, metrics, sweep_count);
    else if (ablate->parsed()) cmd_ablate(s, trials);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
