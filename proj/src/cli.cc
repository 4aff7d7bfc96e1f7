// Copyright 2026 The reverbswap Authors.
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

#include "reverbswap/cli.h"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "reverbswap/audio_io.h"
#include "reverbswap/checkpoint.h"
#include "reverbswap/convert.h"
#include "reverbswap/databus.h"
#include "reverbswap/metrics.h"
#include "reverbswap/reverb.h"
#include "reverbswap/rng.h"
#include "reverbswap/training.h"

namespace reverbswap {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

Profile profile_named(const std::string& name) {
  if (name == "full") return {name, StftConfig{}, ModelConfig::canonical()};
  if (name == "tiny") {
    return {name, StftConfig{512, 128, 512, true}, ModelConfig::tiny()};
  }
  throw UsageError("unknown profile '" + name + "' (expected full or tiny)");
}

ojson to_json(const StftConfig& c) {
  return {{"win_len", c.win_len},
          {"hop", c.hop},
          {"fft_size", c.fft_size},
          {"center", c.center}};
}

StftConfig stft_config_from_json(const json& j, StftConfig base) {
  base.win_len = j.value("win_len", base.win_len);
  base.hop = j.value("hop", base.hop);
  base.fft_size = j.value("fft_size", base.fft_size);
  base.center = j.value("center", base.center);
  return base;
}

namespace {

// Tees plain-text log lines to the console and, once opened, a file.
class RunLog {
 public:
  explicit RunLog(std::ostream& out) : out_(out) {}

  void open(const fs::path& file) {
    fs::create_directories(file.parent_path());
    file_.open(file, std::ios::trunc);
    if (!file_) throw UsageError("cannot write run log " + file.string());
    for (const auto& l : pending_) file_ << l << '\n';
    pending_.clear();
  }

  void line(const std::string& s) {
    out_ << s << '\n';
    if (file_.is_open()) {
      file_ << s << '\n' << std::flush;
    } else {
      pending_.push_back(s);
    }
  }

 private:
  std::ostream& out_;
  std::ofstream file_;
  std::vector<std::string> pending_;
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read config " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed config " + p.string() + ": " + e.what());
  }
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) {
    throw UsageError(what + " not found: " + p.string());
  }
}

struct DatasetFiles {
  fs::path corpus, presets_train, presets_val, quads_train, quads_val, info;

  explicit DatasetFiles(const fs::path& dir)
      : corpus(dir / "corpus.txt"),
        presets_train(dir / "presets_train.jsonl"),
        presets_val(dir / "presets_val.jsonl"),
        quads_train(dir / "quads_train.jsonl"),
        quads_val(dir / "quads_val.jsonl"),
        info(dir / kDatasetInfoName) {}
};

std::optional<json> dataset_info(const fs::path& manifest) {
  const fs::path p = DatasetFiles(manifest.parent_path()).info;
  if (!fs::is_regular_file(p)) return std::nullopt;
  return read_json_file(p);
}

std::vector<fs::path> corpus_files(const fs::path& corpus) {
  if (fs::is_directory(corpus)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(corpus)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
  }
  require_file(corpus, "corpus");
  return read_corpus(corpus);
}

// Every source referenced by `quads` must be loaded and every preset known.
void check_manifest(const std::vector<QuadDescriptor>& quads,
                    const std::map<std::string, Waveform>& sources,
                    const std::vector<ReverbPreset>& presets,
                    const fs::path& manifest) {
  std::set<std::string> ids;
  for (const auto& p : presets) ids.insert(p.preset_id);
  for (const auto& q : quads) {
    for (const auto& s : {q.source_a, q.source_b}) {
      if (!sources.count(s)) {
        throw UsageError(manifest.string() + ": quad " + q.quad_id +
                         " names unknown source '" + s + "'");
      }
    }
    for (const auto& p : {q.preset_1, q.preset_2}) {
      if (!ids.count(p)) {
        throw UsageError(manifest.string() + ": quad " + q.quad_id +
                         " names unknown preset '" + p + "'");
      }
    }
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- synth-data

struct SynthDataArgs {
  fs::path corpus, out, config;
  std::string profile = "full";
  int quads = 64;
  int val_quads = 16;
  std::uint64_t seed = 0;
  bool allow_resample = false;
};

void cmd_synth_data(const SynthDataArgs& a, RunLog& log) {
  const Profile prof = profile_named(a.profile);
  const std::size_t clip = prof.clip_samples();
  if (a.quads < 0 || a.val_quads < 0) {
    throw UsageError("quad counts must be nonnegative");
  }

  const auto files = corpus_files(a.corpus);
  const auto sources = load_sources(files, {a.allow_resample});
  if (sources.size() < 2) {
    throw UsageError("corpus needs at least two dry WAV files, found " +
                     std::to_string(sources.size()));
  }
  std::vector<std::string> ids;
  for (const auto& [id, w] : sources) {
    if (w.frames() < clip) {
      throw UsageError("corpus source '" + id + "' has " +
                       std::to_string(w.frames()) +
                       " frames; at least one clip (" + std::to_string(clip) +
                       ") is required");
    }
    ids.push_back(id);
  }

  ojson cfg = {{"command", "synth-data"},
               {"profile", prof.name},
               {"clip_samples", clip},
               {"corpus", fs::absolute(a.corpus).lexically_normal().string()},
               {"out", a.out.string()},
               {"quads", a.quads},
               {"val_quads", a.val_quads},
               {"seed", a.seed},
               {"allow_resample", a.allow_resample}};
  const DatasetFiles f(a.out);
  log.open(a.out / kRunLogName);
  log.line("effective config " + cfg.dump());

  const auto train_presets = generate_presets(
      PresetSpace::train(), kTrainPresetCount, mix_seed({a.seed, 1}));
  const auto val_presets = generate_presets(
      PresetSpace::validation(), kValPresetCount, mix_seed({a.seed, 2}));
  const auto train_quads =
      make_dataset(ids, train_presets, a.quads, mix_seed({a.seed, 3}));
  const auto val_quads =
      make_dataset(ids, val_presets, a.val_quads, mix_seed({a.seed, 4}));

  std::vector<fs::path> abs_files;
  for (const auto& p : files) abs_files.push_back(fs::absolute(p).lexically_normal());
  write_corpus(abs_files, f.corpus);
  write_presets(train_presets, f.presets_train);
  write_presets(val_presets, f.presets_val);
  write_manifest(train_quads, f.quads_train);
  write_manifest(val_quads, f.quads_val);
  // The dataset record omits its own location so a moved copy stays valid.
  ojson info = cfg;
  info.erase("out");
  info["sources"] = ids;
  std::ofstream(f.info) << info.dump(2) << '\n';

  log.line("wrote " + std::to_string(ids.size()) + " sources, " +
           std::to_string(train_presets.size()) + "/" +
           std::to_string(val_presets.size()) + " presets, " +
           std::to_string(train_quads.size()) + "/" +
           std::to_string(val_quads.size()) + " quads to " + a.out.string());
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  fs::path manifest, out, config, corpus, presets;
  std::optional<std::string> profile;
  std::optional<int> epochs, adv_start, batch_size, steps_per_epoch,
      keep_checkpoints;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  bool no_gamma_redraw = false;
  bool resume = false;
};

TrainConfig apply_train_flags(TrainConfig c, const TrainArgs& a) {
  if (a.epochs) c.total_epochs = *a.epochs;
  if (a.adv_start) c.adv_start_epoch = *a.adv_start;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.steps_per_epoch) c.steps_per_epoch = *a.steps_per_epoch;
  if (a.lr) c.lr = *a.lr;
  if (a.seed) c.seed = *a.seed;
  if (a.no_gamma_redraw) c.redraw_gamma = false;
  try {
    c.validate();
  } catch (const TrainingError& e) {
    throw UsageError(e.what());
  }
  return c;
}

void cmd_train(const TrainArgs& a, RunLog& log) {
  require_file(a.manifest, "manifest");
  const auto info = dataset_info(a.manifest);
  const json file = a.config.empty() ? json::object() : read_json_file(a.config);
  const DatasetFiles f(a.manifest.parent_path());
  const fs::path corpus = a.corpus.empty() ? f.corpus : a.corpus;
  const fs::path presets_path = a.presets.empty() ? f.presets_train : a.presets;
  require_file(corpus, "corpus list");
  require_file(presets_path, "preset manifest");

  std::optional<Trainer> trainer;
  std::string profile_name;
  if (a.resume) {
    const auto latest = latest_checkpoint(a.out);
    if (!latest) {
      throw UsageError("--resume: no epoch checkpoint in " + a.out.string());
    }
    trainer.emplace(Trainer::from_checkpoint(load_checkpoint(*latest)));
    TrainConfig& c = trainer->config();
    if (file.contains("train")) c = train_config_from_json(file["train"], c);
    c = apply_train_flags(c, a);
    profile_name = "checkpoint";
    log.open(a.out / kRunLogName);
    log.line("resuming from " + latest->string() + " at epoch " +
             std::to_string(trainer->next_epoch()));
  } else {
    profile_name = a.profile.value_or(file.value(
        "profile", info ? info->value("profile", "full") : "full"));
    Profile prof = profile_named(profile_name);
    if (file.contains("stft")) prof.stft = stft_config_from_json(file["stft"], prof.stft);
    if (file.contains("model")) {
      ojson m = to_json(prof.model);
      m.update(file["model"]);
      prof.model = model_config_from_json(m);
    }
    TrainConfig c;
    if (file.contains("train")) c = train_config_from_json(file["train"], c);
    c = apply_train_flags(c, a);
    try {
      trainer.emplace(prof.model, prof.stft, c);
    } catch (const TrainingError& e) {
      throw UsageError(e.what());
    }
    log.open(a.out / kRunLogName);
  }

  const std::size_t clip = segment_samples(trainer->net().config(), trainer->stft());
  if (info && info->value("clip_samples", clip) != clip) {
    throw UsageError("dataset clips are " +
                     std::to_string(info->value("clip_samples", 0)) +
                     " samples but the model expects " + std::to_string(clip) +
                     "; rerun synth-data with the matching --profile");
  }

  ojson cfg = {{"command", "train"},
               {"manifest", a.manifest.string()},
               {"out", a.out.string()},
               {"profile", profile_name},
               {"resume", a.resume},
               {"stft", to_json(trainer->stft())},
               {"model", to_json(trainer->net().config())},
               {"train", to_json(trainer->config())},
               {"keep_checkpoints", a.keep_checkpoints.value_or(0)}};
  log.line("effective config " + cfg.dump());

  const auto quads = read_manifest(a.manifest);
  if (quads.empty()) throw UsageError("manifest " + a.manifest.string() + " is empty");
  const auto presets = read_presets(presets_path);
  auto sources = load_sources(read_corpus(corpus));
  check_manifest(quads, sources, presets, a.manifest);
  QuadMaterializer data(std::move(sources), presets, clip);
  log.line("parameters " + std::to_string(trainer->net().parameter_count()) +
           ", quads " + std::to_string(quads.size()));

  TrainIo io;
  io.out_dir = a.out;
  io.keep_checkpoints = a.keep_checkpoints.value_or(0);
  int cur_epoch = -1;
  double spec_sum = 0.0;
  int n = 0;
  auto flush_epoch = [&] {
    if (n > 0) {
      log.line("epoch " + std::to_string(cur_epoch) + " mean l_spec " +
               fmt(spec_sum / n) + " over " + std::to_string(n) + " steps");
    }
  };
  io.on_step = [&](const LossReport& r) {
    if (r.epoch != cur_epoch) {
      flush_epoch();
      cur_epoch = r.epoch;
      spec_sum = 0.0;
      n = 0;
    }
    spec_sum += r.l_spec;
    ++n;
    log.line("step " + std::to_string(r.step) + " epoch " +
             std::to_string(r.epoch) + " l_spec " + fmt(r.l_spec) +
             " l_latent " + fmt(r.l_latent) + " l_gen_adv " +
             fmt(r.l_gen_adv) + " l_disc " + fmt(r.l_disc) +
             (r.adv_active ? " adv" : ""));
  };
  try {
    train(*trainer, data, quads, io);
  } catch (const TrainingError& e) {
    flush_epoch();
    const auto last = latest_checkpoint(a.out);
    log.line(std::string("training aborted: ") + e.what() + "; last checkpoint " +
             (last ? last->string() : checkpoint_path(a.out, -1).string()));
    throw;
  }
  flush_epoch();
  log.line("finished at epoch " + std::to_string(trainer->next_epoch()) +
           ", step " + std::to_string(trainer->global_step()));
}

// ------------------------------------------------------- convert / dereverb

struct ConvertArgs {
  fs::path input, reference, ckpt, out;
  bool allow_resample = false;
};

Trainer load_model(const fs::path& ckpt) {
  require_file(ckpt, "checkpoint");
  return Trainer::from_checkpoint(load_checkpoint(ckpt));
}

Waveform load_for_model(const fs::path& p, bool allow_resample) {
  Waveform w = load_wav(p);
  if (w.channels() < 1 || w.channels() > 2) {
    throw AudioError(p.string() + ": expected mono or stereo audio");
  }
  if (w.sample_rate() != kCanonicalSampleRate) {
    if (!allow_resample) {
      throw AudioError(p.string() + " is " + std::to_string(w.sample_rate()) +
                       " Hz; pass --allow-resample to convert to 44100 Hz");
    }
    w = resample(w, kCanonicalSampleRate);
  }
  return w;
}

void cmd_convert(const ConvertArgs& a, const std::string& command, RunLog& log) {
  ojson cfg = {{"command", command},
               {"input", a.input.string()},
               {command == "dereverb" ? "dry_ref" : "reference",
                a.reference.string()},
               {"ckpt", a.ckpt.string()},
               {"out", a.out.string()},
               {"allow_resample", a.allow_resample}};
  log.line("effective config " + cfg.dump());
  Trainer model = load_model(a.ckpt);
  const Waveform raw = load_wav(a.input);
  const Waveform input = load_for_model(a.input, a.allow_resample);
  const Waveform ref = load_for_model(a.reference, a.allow_resample);
  Waveform y = convert_track(model.net(), model.stft(), input, ref);
  if (raw.sample_rate() != y.sample_rate()) {
    y = resample(y, raw.sample_rate());
    if (y.frames() != raw.frames()) y = y.slice(0, std::min(y.frames(), raw.frames()));
  }
  if (!a.out.parent_path().empty()) fs::create_directories(a.out.parent_path());
  save_wav(y, a.out);
  log.line("wrote " + a.out.string() + " (" + std::to_string(y.frames()) +
           " frames, " + std::to_string(y.channels()) + " ch)");
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  fs::path ckpt, manifest, out, corpus, presets;
  std::string mode;
  std::string pesq_cmd;
  int max_items = 0;
};

void cmd_evaluate(const EvaluateArgs& a, RunLog& log) {
  require_file(a.manifest, "validation manifest");
  const auto quads_all = read_manifest(a.manifest);
  if (quads_all.empty()) {
    throw UsageError("validation manifest " + a.manifest.string() +
                     " is empty; no report written");
  }
  std::vector<QuadDescriptor> quads = quads_all;
  if (a.max_items > 0 && quads.size() > static_cast<std::size_t>(a.max_items)) {
    quads.resize(a.max_items);
  }
  const DatasetFiles f(a.manifest.parent_path());
  const fs::path corpus = a.corpus.empty() ? f.corpus : a.corpus;
  const fs::path presets_path = a.presets.empty() ? f.presets_val : a.presets;
  require_file(corpus, "corpus list");
  require_file(presets_path, "preset manifest");

  Trainer model = load_model(a.ckpt);
  const std::size_t clip = segment_samples(model.net().config(), model.stft());
  // Scored clips span whole segments and at least kMinEvalSamples, so short
  // desk-scale segments still give STOI enough frames.
  const std::size_t eval_clip =
      clip * ((kMinEvalSamples + clip - 1) / clip);
  if (const auto info = dataset_info(a.manifest);
      info && info->value("clip_samples", clip) != clip) {
    throw UsageError("manifest/checkpoint mismatch: dataset clips are " +
                     std::to_string(info->value("clip_samples", 0)) +
                     " samples, the checkpoint expects " + std::to_string(clip));
  }

  ojson cfg = {{"command", "evaluate"},
               {"ckpt", a.ckpt.string()},
               {"val_manifest", a.manifest.string()},
               {"mode", a.mode},
               {"out", a.out.string()},
               {"pesq_cmd", a.pesq_cmd},
               {"items", quads.size()},
               {"eval_clip_samples", eval_clip}};
  log.line("effective config " + cfg.dump());

  const auto presets = read_presets(presets_path);
  auto sources = load_sources(read_corpus(corpus));
  check_manifest(quads, sources, presets, a.manifest);
  for (const auto& [id, w] : sources) {
    if (w.frames() < eval_clip) {
      throw UsageError("source '" + id + "' is shorter than the " +
                       std::to_string(eval_clip) + "-sample evaluation clip");
    }
  }
  QuadMaterializer data(std::move(sources), presets, eval_clip);
  const PesqScorer pesq(a.pesq_cmd);
  EvalReport report(a.mode);
  auto& net = model.net();
  const auto& stft_cfg = model.stft();

  if (a.mode == "conversion") {
    for (const auto& d : quads) {
      const TrainingQuad q = data.materialize(d);
      const Waveform out_a = convert_track(net, stft_cfg, q.in_a.audio, q.in_b.audio);
      const Waveform out_b = convert_track(net, stft_cfg, q.in_b.audio, q.in_a.audio);
      report.add("input", std::nullopt,
                 eval_conversion(q.in_a.audio, q.gt_a.audio, d.quad_id + "/a", pesq));
      report.add("input", std::nullopt,
                 eval_conversion(q.in_b.audio, q.gt_b.audio, d.quad_id + "/b", pesq));
      report.add("model", std::nullopt,
                 eval_conversion(out_a, q.gt_a.audio, d.quad_id + "/a", pesq));
      report.add("model", std::nullopt,
                 eval_conversion(out_b, q.gt_b.audio, d.quad_id + "/b", pesq));
    }
    report.write(a.out, {"stoi", "pesq"});
    log.line(report.table({"stoi", "pesq"}));
  } else {
    // The quad's second source, dry, serves as the reference.
    for (int k = 2; k <= 14; k += 2) {
      const double g = gamma_value(k);
      for (const auto& d0 : quads) {
        QuadDescriptor d = d0;
        d.gamma_1 = g;
        d.gamma_2 = 0.0;
        const TrainingQuad q = data.materialize(d);
        const Waveform out = convert_track(net, stft_cfg, q.in_a.audio, q.in_b.audio);
        report.add("input", g, eval_dereverb(q.in_a.audio, q.gt_a.audio, d.quad_id, pesq));
        report.add("model", g, eval_dereverb(out, q.gt_a.audio, d.quad_id, pesq));
      }
      data.clear_cache();
    }
    report.write(a.out, {"srmr", "stoi", "si_sdr", "pesq"});
    log.line(report.table({"srmr", "stoi", "si_sdr", "pesq"}));
  }
  log.line("wrote " + a.out.string() + " and " + a.out.string() + ".jsonl");
}

template <typename T>
std::optional<T> flag(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Reverb conversion between vocal tracks", "reverbswap"};
  app.require_subcommand(1);

  // synth-data
  SynthDataArgs sd;
  auto* sd_cmd = app.add_subcommand("synth-data", "Draw presets and quad manifests");
  sd_cmd->add_option("--corpus", sd.corpus, "Directory of dry WAVs or a corpus list")->required();
  sd_cmd->add_option("--out", sd.out, "Dataset directory")->required();
  auto* sd_quads = sd_cmd->add_option("--quads", sd.quads, "Training quads")->capture_default_str();
  auto* sd_val = sd_cmd->add_option("--val-quads", sd.val_quads, "Validation quads")->capture_default_str();
  auto* sd_seed = sd_cmd->add_option("--seed", sd.seed, "Random seed")->capture_default_str();
  auto* sd_prof = sd_cmd->add_option("--profile", sd.profile, "full or tiny")->capture_default_str();
  sd_cmd->add_option("--config", sd.config, "JSON config file");
  sd_cmd->add_flag("--allow-resample", sd.allow_resample, "Resample non-44.1 kHz sources");

  // train
  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a model on a quad manifest");
  tr_cmd->add_option("--manifest", tr.manifest, "Training quad manifest")->required();
  tr_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  tr_cmd->add_option("--config", tr.config, "JSON config file");
  tr_cmd->add_option("--corpus", tr.corpus, "Corpus list (default: next to manifest)");
  tr_cmd->add_option("--presets", tr.presets, "Preset manifest (default: next to manifest)");
  std::string tr_profile;
  int tr_epochs = 0, tr_adv = 0, tr_batch = 0, tr_spe = 0, tr_keep = 0;
  double tr_lr = 0.0;
  std::uint64_t tr_seed = 0;
  auto* o_prof = tr_cmd->add_option("--profile", tr_profile, "full or tiny");
  auto* o_epochs = tr_cmd->add_option("--epochs", tr_epochs, "Total epochs");
  auto* o_adv = tr_cmd->add_option("--adv-start", tr_adv, "First adversarial epoch (0-based)");
  auto* o_batch = tr_cmd->add_option("--batch-size", tr_batch, "Quads per step");
  auto* o_spe = tr_cmd->add_option("--steps-per-epoch", tr_spe, "Steps per epoch (0: one pass)");
  auto* o_lr = tr_cmd->add_option("--lr", tr_lr, "Learning rate");
  auto* o_seed = tr_cmd->add_option("--seed", tr_seed, "Random seed");
  auto* o_keep = tr_cmd->add_option("--keep-checkpoints", tr_keep, "Keep newest N epoch checkpoints");
  tr_cmd->add_flag("--no-gamma-redraw", tr.no_gamma_redraw, "Keep manifest gammas every epoch");
  tr_cmd->add_flag("--resume", tr.resume, "Continue from the newest checkpoint in --out");

  // convert
  ConvertArgs cv;
  auto* cv_cmd = app.add_subcommand("convert", "Apply a reference track's reverb");
  cv_cmd->add_option("--input", cv.input, "Source WAV")->required();
  cv_cmd->add_option("--reference", cv.reference, "Reference WAV")->required();
  cv_cmd->add_option("--ckpt", cv.ckpt, "Checkpoint")->required();
  cv_cmd->add_option("--out", cv.out, "Output WAV")->required();
  cv_cmd->add_flag("--allow-resample", cv.allow_resample, "Resample non-44.1 kHz inputs");

  // dereverb
  ConvertArgs dr;
  auto* dr_cmd = app.add_subcommand("dereverb", "Remove reverb using a dry reference");
  dr_cmd->add_option("--input", dr.input, "Reverberant WAV")->required();
  auto* dr_ref = dr_cmd->add_option("--dry-ref", dr.reference, "Any dry vocal WAV");
  dr_cmd->add_option("--ckpt", dr.ckpt, "Checkpoint")->required();
  dr_cmd->add_option("--out", dr.out, "Output WAV")->required();
  dr_cmd->add_flag("--allow-resample", dr.allow_resample, "Resample non-44.1 kHz inputs");

  // evaluate
  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Score a checkpoint on validation quads");
  ev_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  ev_cmd->add_option("--val-manifest", ev.manifest, "Validation quad manifest")->required();
  ev_cmd->add_option("--mode", ev.mode, "conversion or dereverb")
      ->required()
      ->check(CLI::IsMember({"conversion", "dereverb"}));
  ev_cmd->add_option("--out", ev.out, "Report path (table; JSONL alongside)")->required();
  ev_cmd->add_option("--corpus", ev.corpus, "Corpus list (default: next to manifest)");
  ev_cmd->add_option("--presets", ev.presets, "Preset manifest (default: validation presets)");
  ev_cmd->add_option("--pesq-cmd", ev.pesq_cmd, "External PESQ scorer command");
  ev_cmd->add_option("--max-items", ev.max_items, "Evaluate at most N quads (0: all)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(std::move(rev));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  RunLog log(out);
  try {
    if (*sd_cmd) {
      if (!sd.config.empty()) {
        const json j = read_json_file(sd.config);
        if (!sd_prof->count()) sd.profile = j.value("profile", sd.profile);
        const json d = j.value("data", json::object());
        if (!sd_quads->count()) sd.quads = d.value("quads", sd.quads);
        if (!sd_val->count()) sd.val_quads = d.value("val_quads", sd.val_quads);
        if (!sd_seed->count()) sd.seed = d.value("seed", sd.seed);
      }
      cmd_synth_data(sd, log);
    } else if (*tr_cmd) {
      tr.profile = flag(o_prof, tr_profile);
      tr.epochs = flag(o_epochs, tr_epochs);
      tr.adv_start = flag(o_adv, tr_adv);
      tr.batch_size = flag(o_batch, tr_batch);
      tr.steps_per_epoch = flag(o_spe, tr_spe);
      tr.lr = flag(o_lr, tr_lr);
      tr.seed = flag(o_seed, tr_seed);
      tr.keep_checkpoints = flag(o_keep, tr_keep);
      cmd_train(tr, log);
    } else if (*cv_cmd) {
      cmd_convert(cv, "convert", log);
    } else if (*dr_cmd) {
      if (!dr_ref->count()) {
        throw UsageError(
            "dereverb needs --dry-ref: supply any clean (dry) vocal recording "
            "as the reference");
      }
      cmd_convert(dr, "dereverb", log);
    } else if (*ev_cmd) {
      cmd_evaluate(ev, log);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const AudioError& e) {
    err << "audio error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 1;
  } catch (const ReverbError& e) {
    err << "preset error: " << e.what() << '\n';
    return 1;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return 1;
  } catch (const MetricError& e) {
    err << "metric error: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    err << "model/config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace reverbswap
