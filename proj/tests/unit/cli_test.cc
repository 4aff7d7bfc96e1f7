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

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "reverbswap/cli.h"
#include "reverbswap/databus.h"
#include "reverbswap/training.h"
#include "synth_vocal.h"

namespace fs = std::filesystem;
namespace rs = reverbswap;
using rs::testing::TempDir;

namespace {

// Long enough for one evaluation clip of the tiny profile.
constexpr std::size_t kSourceFrames = 100000;

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = rs::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

// A narrow network on the tiny STFT so a training step takes milliseconds.
fs::path write_small_config(const fs::path& dir) {
  const auto p = dir / "small.json";
  std::ofstream(p) << R"({"profile": "tiny",
    "model": {"channels": [4, 8, 16, 32, 64]},
    "train": {"batch_size": 1, "steps_per_epoch": 1}})";
  return p;
}

struct Workspace {
  TempDir dir{"cli"};
  fs::path corpus, data, config;

  Workspace() {
    corpus = rs::testing::write_vocal_corpus(dir / "corpus", 3, kSourceFrames, 5);
    data = dir / "data";
    config = write_small_config(dir.path());
    const Run r = cli({"synth-data", "--corpus", corpus.string(), "--out",
                       data.string(), "--profile", "tiny", "--quads", "6",
                       "--val-quads", "2", "--seed", "3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }

  Run train(const fs::path& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{"train", "--manifest", (data / "quads_train.jsonl").string(),
                                  "--out", out.string(), "--config", config.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }
};

}  // namespace

TEST_CASE("synth-data writes a reproducible dataset") {
  TempDir dir("cli_synth");
  const auto corpus = rs::testing::write_vocal_corpus(dir / "corpus", 2, 20000, 1);
  auto synth = [&](const std::string& out, const std::string& seed, const std::string& quads) {
    return cli({"synth-data", "--corpus", corpus.string(), "--out", (dir / out).string(),
                "--profile", "tiny", "--quads", quads, "--val-quads", "3", "--seed", seed});
  };

  SUBCASE("no quads still writes every file") {
    REQUIRE(synth("zero", "1", "0").code == 0);
    for (const char* name : {"corpus.txt", "presets_train.jsonl", "presets_val.jsonl",
                             "quads_train.jsonl", "quads_val.jsonl", "dataset.json",
                             "run.log"}) {
      CHECK(fs::exists(dir / "zero" / name));
    }
    CHECK(lines_of(dir / "zero" / "quads_train.jsonl").empty());
    CHECK(lines_of(dir / "zero" / "presets_train.jsonl").size() == 36);
    CHECK(lines_of(dir / "zero" / "presets_val.jsonl").size() == 4);
    const auto info = nlohmann::json::parse(slurp(dir / "zero" / "dataset.json"));
    CHECK(info["clip_samples"] == 16384);
    CHECK(info["sources"].size() == 2);
  }
  SUBCASE("same seed, same bytes; two-clip corpus pairs distinct sources") {
    REQUIRE(synth("a", "9", "20").code == 0);
    REQUIRE(synth("b", "9", "20").code == 0);
    REQUIRE(synth("c", "10", "20").code == 0);
    for (const char* name : {"quads_train.jsonl", "quads_val.jsonl", "presets_train.jsonl",
                             "presets_val.jsonl"}) {
      CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
    CHECK(slurp(dir / "a" / "quads_train.jsonl") != slurp(dir / "c" / "quads_train.jsonl"));
    const auto quads = rs::read_manifest(dir / "a" / "quads_train.jsonl");
    REQUIRE(quads.size() == 20);
    for (const auto& q : quads) CHECK(q.source_a != q.source_b);
  }
  SUBCASE("unusable corpora are usage errors") {
    const auto one = rs::testing::write_vocal_corpus(dir / "one", 1, 20000, 2);
    const Run r = cli({"synth-data", "--corpus", one.string(), "--out",
                       (dir / "x").string(), "--profile", "tiny"});
    CHECK(r.code == 1);
    CHECK(r.err.find("at least two") != std::string::npos);
    const auto short_corpus = rs::testing::write_vocal_corpus(dir / "short", 2, 1000, 2);
    CHECK(cli({"synth-data", "--corpus", short_corpus.string(), "--out",
               (dir / "y").string(), "--profile", "tiny"}).code == 1);
    CHECK(cli({"synth-data", "--corpus", (dir / "missing").string(), "--out",
               (dir / "z").string()}).code == 1);
    CHECK(cli({"synth-data", "--corpus", corpus.string(), "--out", (dir / "w").string(),
               "--profile", "huge"}).code == 1);
    CHECK(cli({"synth-data", "--corpus", corpus.string(), "--out", (dir / "v").string(),
               "--quads", "-1"}).code == 1);
  }
}

TEST_CASE("train, resume, convert and evaluate") {
  Workspace ws;
  const fs::path run = ws.dir / "run";

  const Run first = ws.train(run, {"--epochs", "1", "--adv-start", "1"});
  REQUIRE_MESSAGE(first.code == 0, first.err);
  CHECK(fs::exists(run / "ckpt_init.bin"));
  CHECK(fs::exists(run / "ckpt_epoch_0000.bin"));
  CHECK(fs::exists(run / "run.log"));
  CHECK(first.out.find("effective config") != std::string::npos);
  auto log = lines_of(run / rs::kLossLogName);
  REQUIRE(log.size() == 1);
  CHECK_FALSE(rs::LossReport::from_json_line(log[0]).adv_active);

  SUBCASE("resume continues the epoch count and switches on the adversary") {
    const Run more = ws.train(run, {"--resume", "--epochs", "2"});
    REQUIRE_MESSAGE(more.code == 0, more.err);
    CHECK(fs::exists(run / "ckpt_epoch_0001.bin"));
    log = lines_of(run / rs::kLossLogName);
    REQUIRE(log.size() == 2);
    const auto r = rs::LossReport::from_json_line(log[1]);
    CHECK(r.epoch == 1);
    CHECK(r.step == 1);
    CHECK(r.adv_active);
    CHECK(r.l_disc > 0.0);
  }
  SUBCASE("training is reproducible") {
    const fs::path again = ws.dir / "again";
    REQUIRE(ws.train(again, {"--epochs", "1", "--adv-start", "1"}).code == 0);
    CHECK(slurp(again / rs::kLossLogName) == slurp(run / rs::kLossLogName));
    CHECK(slurp(again / "ckpt_epoch_0000.bin") == slurp(run / "ckpt_epoch_0000.bin"));
  }
  SUBCASE("train usage errors") {
    CHECK(ws.train(ws.dir / "r2", {"--resume"}).code == 1);
    CHECK(ws.train(ws.dir / "r3", {"--profile", "full"}).code == 1);
    CHECK(ws.train(ws.dir / "r4", {"--batch-size", "0"}).code == 1);
    CHECK(cli({"train", "--manifest", (ws.dir / "nope.jsonl").string(), "--out",
               (ws.dir / "r5").string()}).code == 1);
  }
  SUBCASE("convert and dereverb") {
    const fs::path ckpt = run / "ckpt_epoch_0000.bin";
    const fs::path in = ws.dir / "corpus" / "vocal0.wav";
    const fs::path ref = ws.dir / "corpus" / "vocal1.wav";
    const fs::path a = ws.dir / "a.wav", b = ws.dir / "b.wav";
    REQUIRE(cli({"convert", "--input", in.string(), "--reference", ref.string(),
                 "--ckpt", ckpt.string(), "--out", a.string()}).code == 0);
    const auto out = rs::load_wav(a);
    CHECK(out.frames() == kSourceFrames);
    CHECK(out.channels() == 2);
    CHECK(out.sample_rate() == 44100);

    const Run no_ref = cli({"dereverb", "--input", in.string(), "--ckpt", ckpt.string(),
                            "--out", b.string()});
    CHECK(no_ref.code == 1);
    CHECK(no_ref.err.find("--dry-ref") != std::string::npos);
    CHECK_FALSE(fs::exists(b));
    REQUIRE(cli({"dereverb", "--input", in.string(), "--dry-ref", ref.string(),
                 "--ckpt", ckpt.string(), "--out", b.string()}).code == 0);
    CHECK(slurp(a) == slurp(b));

    CHECK(cli({"convert", "--input", (ws.dir / "none.wav").string(), "--reference",
               ref.string(), "--ckpt", ckpt.string(), "--out", a.string()}).code == 1);
    CHECK(cli({"convert", "--input", in.string(), "--reference", ref.string(), "--ckpt",
               (ws.dir / "none.bin").string(), "--out", a.string()}).code == 1);
  }
  SUBCASE("evaluate") {
    const fs::path ckpt = run / "ckpt_epoch_0000.bin";
    const fs::path val = ws.data / "quads_val.jsonl";
    const fs::path conv = ws.dir / "conv.txt", der = ws.dir / "der.txt";
    const Run c = cli({"evaluate", "--ckpt", ckpt.string(), "--val-manifest", val.string(),
                       "--mode", "conversion", "--out", conv.string(), "--max-items", "1"});
    REQUIRE_MESSAGE(c.code == 0, c.err);
    const std::string table = slurp(conv);
    CHECK(table.find("input") != std::string::npos);
    CHECK(table.find("model") != std::string::npos);
    CHECK(table.find("stoi") != std::string::npos);
    CHECK(lines_of(fs::path(conv.string() + ".jsonl")).size() >= 2);

    const Run d = cli({"evaluate", "--ckpt", ckpt.string(), "--val-manifest", val.string(),
                       "--mode", "dereverb", "--out", der.string(), "--max-items", "1"});
    REQUIRE_MESSAGE(d.code == 0, d.err);
    const auto rows = lines_of(fs::path(der.string() + ".jsonl"));
    // Input and model rows at gamma 0.1, 0.2, ..., 0.7.
    CHECK(rows.size() == 14);
    for (const auto& l : rows) {
      const auto j = nlohmann::json::parse(l);
      CHECK(j.contains("srmr"));
      CHECK(j.contains("si_sdr"));
    }

    std::ofstream(ws.data / "empty.jsonl").close();
    const fs::path none = ws.dir / "none.txt";
    CHECK(cli({"evaluate", "--ckpt", ckpt.string(), "--val-manifest",
               (ws.data / "empty.jsonl").string(), "--out", none.string()}).code == 1);
    CHECK_FALSE(fs::exists(none));
    CHECK(cli({"evaluate", "--ckpt", ckpt.string(), "--val-manifest", val.string(),
               "--mode", "karaoke", "--out", none.string()}).code == 1);
  }
}

TEST_CASE("argument errors") {
  CHECK(cli({}).code != 0);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"train"}).code == 1);
  const Run help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("synth-data") != std::string::npos);
}

TEST_CASE("installed executable reports exit codes") {
  const std::string exe = REVERBSWAP_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status(exe + " --help") == 0);
  CHECK(status(exe + " frobnicate") == 1);
  CHECK(status(exe + " convert --input /nonexistent.wav --reference /nonexistent.wav"
                     " --ckpt /nonexistent.bin --out /tmp/never.wav") == 1);
}
