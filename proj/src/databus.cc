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

#include "reverbswap/databus.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "reverbswap/rng.h"

namespace reverbswap {

int gamma_step(double gamma) {
  const double k = std::round(gamma * 20.0);
  if (k < 0 || k >= kGammaSteps || std::abs(gamma - k / 20.0) > 1e-9) return -1;
  return static_cast<int>(k);
}

void MixSpec::validate() const {
  if (gamma_step(gamma) < 0) {
    throw DataError("gamma " + std::to_string(gamma) +
                    " is not on the 0.05 grid in [0, 0.75]");
  }
}

void TrainingQuad::check_invariants() const {
  auto fail = [](const std::string& what) {
    throw DataError("quad invariant violated: " + what);
  };
  if (in_a.spec.source_id != gt_a.spec.source_id) fail("in_a/gt_a source");
  if (in_b.spec.source_id != gt_b.spec.source_id) fail("in_b/gt_b source");
  if (in_a.spec.preset_id != gt_b.spec.preset_id ||
      in_a.spec.gamma != gt_b.spec.gamma) {
    fail("in_a/gt_b reverb");
  }
  if (in_b.spec.preset_id != gt_a.spec.preset_id ||
      in_b.spec.gamma != gt_a.spec.gamma) {
    fail("in_b/gt_a reverb");
  }
}

Waveform mix_bus(const Waveform& src, const Waveform& rev, double gamma) {
  if (!(gamma >= 0.0)) throw DataError("gamma must be nonnegative");
  if (src.channels() != rev.channels() || src.frames() != rev.frames()) {
    throw DataError("mix_bus: source and reverb shapes differ");
  }
  if (src.sample_rate() != rev.sample_rate()) {
    throw DataError("mix_bus: sample rates differ");
  }
  Waveform out(src.channels(), src.frames(), src.sample_rate());
  auto s = src.data();
  auto r = rev.data();
  auto o = out.data();
  const double norm = gamma + 1.0;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (s[i] + gamma * r[i]) / norm;
  return out;
}

namespace {

MixedTrack make_track(const std::string& source, const Waveform& dry,
                      const std::string& preset, const Waveform& wet,
                      double gamma) {
  MixedTrack t{{source, preset, gamma}, mix_bus(dry, wet, gamma)};
  t.spec.validate();
  return t;
}

}  // namespace

TrainingQuad build_quad(const Waveform& dry_a, const Waveform& dry_b,
                        const ReverbPreset& p1, const ReverbPreset& p2,
                        double gamma_1, double gamma_2,
                        const QuadOptions& opts) {
  if (dry_a.frames() != dry_b.frames() ||
      dry_a.channels() != dry_b.channels()) {
    throw DataError("build_quad: dry clips differ in shape");
  }
  if (opts.clip_frames != 0 && dry_a.frames() != opts.clip_frames) {
    throw DataError("build_quad: dry clips have " +
                    std::to_string(dry_a.frames()) + " frames, expected " +
                    std::to_string(opts.clip_frames));
  }
  const Waveform a1 = render_wet(dry_a, p1);
  const Waveform a2 = render_wet(dry_a, p2);
  const Waveform b1 = render_wet(dry_b, p1);
  const Waveform b2 = render_wet(dry_b, p2);
  TrainingQuad q{
      make_track(opts.source_a, dry_a, p1.preset_id, a1, gamma_1),
      make_track(opts.source_b, dry_b, p2.preset_id, b2, gamma_2),
      make_track(opts.source_a, dry_a, p2.preset_id, a2, gamma_2),
      make_track(opts.source_b, dry_b, p1.preset_id, b1, gamma_1),
  };
  q.check_invariants();
  return q;
}

std::pair<MixedTrack, MixedTrack> make_derev_pair(const MixedTrack& in,
                                                  const Waveform& dry_ref,
                                                  std::string ref_id) {
  MixedTrack ref{{std::move(ref_id), kDryPresetId, 0.0}, dry_ref};
  return {in, std::move(ref)};
}

std::vector<QuadDescriptor> make_dataset(const std::vector<std::string>& corpus,
                                         const std::vector<ReverbPreset>& presets,
                                         int count, std::uint64_t seed) {
  if (corpus.empty()) throw DataError("dry corpus is empty");
  if (count < 0) throw DataError("quad count must be nonnegative");
  if (count == 0) return {};
  if (std::set<std::string>(corpus.begin(), corpus.end()).size() < 2) {
    throw DataError("dry corpus needs at least two distinct sources");
  }
  if (presets.empty()) throw DataError("no presets to draw from");

  std::vector<QuadDescriptor> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t qseed = mix_seed({seed, static_cast<std::uint64_t>(i)});
    Rng rng(qseed);
    QuadDescriptor d;
    char id[32];
    std::snprintf(id, sizeof(id), "q%06d", i);
    d.quad_id = id;
    d.source_a = corpus[rng.index(corpus.size())];
    do {
      d.source_b = corpus[rng.index(corpus.size())];
    } while (d.source_b == d.source_a);
    d.preset_1 = presets[rng.index(presets.size())].preset_id;
    d.preset_2 = presets[rng.index(presets.size())].preset_id;
    d.gamma_1 = gamma_value(static_cast<int>(rng.index(kGammaSteps)));
    d.gamma_2 = gamma_value(static_cast<int>(rng.index(kGammaSteps)));
    d.segment_offset = rng.index(std::uint64_t{1} << 20);
    d.seed = qseed;
    out.push_back(std::move(d));
  }
  return out;
}

QuadDescriptor with_epoch_gammas(const QuadDescriptor& d, int epoch) {
  if (epoch <= 0) return d;
  QuadDescriptor out = d;
  Rng rng(mix_seed({d.seed, static_cast<std::uint64_t>(epoch), 0x67616d6dULL}));
  out.gamma_1 = gamma_value(static_cast<int>(rng.index(kGammaSteps)));
  out.gamma_2 = gamma_value(static_cast<int>(rng.index(kGammaSteps)));
  return out;
}

std::string descriptor_to_json_line(const QuadDescriptor& d) {
  nlohmann::ordered_json j;
  j["quad_id"] = d.quad_id;
  j["source_a"] = d.source_a;
  j["source_b"] = d.source_b;
  j["preset_1"] = d.preset_1;
  j["preset_2"] = d.preset_2;
  j["gamma_1"] = d.gamma_1;
  j["gamma_2"] = d.gamma_2;
  j["segment_offset"] = d.segment_offset;
  j["seed"] = d.seed;
  return j.dump();
}

QuadDescriptor descriptor_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    QuadDescriptor d;
    d.quad_id = j.at("quad_id").get<std::string>();
    d.source_a = j.at("source_a").get<std::string>();
    d.source_b = j.at("source_b").get<std::string>();
    d.preset_1 = j.at("preset_1").get<std::string>();
    d.preset_2 = j.at("preset_2").get<std::string>();
    d.gamma_1 = j.at("gamma_1").get<double>();
    d.gamma_2 = j.at("gamma_2").get<double>();
    d.segment_offset = j.at("segment_offset").get<std::uint64_t>();
    d.seed = j.at("seed").get<std::uint64_t>();
    if (gamma_step(d.gamma_1) < 0 || gamma_step(d.gamma_2) < 0) {
      throw DataError("quad " + d.quad_id + " has an off-grid gamma");
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad manifest record: ") + e.what());
  }
}

void write_manifest(const std::vector<QuadDescriptor>& quads,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& q : quads) out << descriptor_to_json_line(q) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<QuadDescriptor> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<QuadDescriptor> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(descriptor_from_json_line(line));
  }
  return out;
}

std::vector<std::filesystem::path> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus list " + path.string());
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') continue;
    std::filesystem::path p(line);
    out.push_back(p.is_absolute() ? p : path.parent_path() / p);
  }
  return out;
}

void write_corpus(const std::vector<std::filesystem::path>& files,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& f : files) out << f.string() << '\n';
}

std::string source_id_for(const std::filesystem::path& file) {
  return file.stem().string();
}

std::map<std::string, Waveform> load_sources(
    const std::vector<std::filesystem::path>& files, const IngestOptions& opts) {
  std::map<std::string, Waveform> out;
  for (const auto& f : files) {
    const std::string id = source_id_for(f);
    if (out.count(id)) throw DataError("duplicate source id '" + id + "'");
    out.emplace(id, load_canonical(f, opts));
  }
  return out;
}

QuadMaterializer::QuadMaterializer(std::map<std::string, Waveform> sources,
                                   std::vector<ReverbPreset> presets,
                                   std::size_t clip_frames)
    : sources_(std::move(sources)), clip_frames_(clip_frames) {
  if (clip_frames_ == 0) throw DataError("clip length must be positive");
  for (auto& [id, w] : sources_) {
    if (w.frames() < clip_frames_) {
      throw DataError("source '" + id + "' is shorter than one clip");
    }
    if (w.sample_rate() != kCanonicalSampleRate) {
      throw DataError("source '" + id + "' is not at the canonical rate");
    }
    if (w.channels() != 2) w = w.to_stereo();
  }
  for (auto& p : presets) {
    std::string id = p.preset_id;
    presets_.emplace(std::move(id), std::move(p));
  }
}

const ReverbPreset& QuadMaterializer::preset(const std::string& id) const {
  auto it = presets_.find(id);
  if (it == presets_.end()) throw DataError("unknown preset '" + id + "'");
  return it->second;
}

const Waveform& QuadMaterializer::dry_clip(const std::string& source,
                                           std::uint64_t offset) {
  auto src = sources_.find(source);
  if (src == sources_.end()) throw DataError("unknown source '" + source + "'");
  const std::uint64_t clips = src->second.frames() / clip_frames_;
  const std::uint64_t idx = offset % clips;
  const std::string key = source + "#" + std::to_string(idx);
  auto it = dry_.find(key);
  if (it == dry_.end()) {
    it = dry_.emplace(key, src->second.slice(idx * clip_frames_, clip_frames_))
             .first;
  }
  return it->second;
}

const Waveform& QuadMaterializer::wet_clip(const std::string& source,
                                           std::uint64_t offset,
                                           const std::string& preset_id) {
  const Waveform& dry = dry_clip(source, offset);
  const std::uint64_t idx = offset % (sources_.at(source).frames() / clip_frames_);
  const std::string key = source + "#" + std::to_string(idx) + "@" + preset_id;
  auto it = wet_.find(key);
  if (it == wet_.end()) it = wet_.emplace(key, render_wet(dry, preset(preset_id))).first;
  return it->second;
}

MixedTrack QuadMaterializer::mix(const std::string& source,
                                 std::uint64_t offset,
                                 const std::string& preset_id, double gamma) {
  return make_track(source, dry_clip(source, offset), preset_id,
                    wet_clip(source, offset, preset_id), gamma);
}

TrainingQuad QuadMaterializer::materialize(const QuadDescriptor& d) {
  if (d.source_a == d.source_b) {
    throw DataError("quad " + d.quad_id + " uses one source twice");
  }
  TrainingQuad q{
      mix(d.source_a, d.segment_offset, d.preset_1, d.gamma_1),
      mix(d.source_b, d.segment_offset, d.preset_2, d.gamma_2),
      mix(d.source_a, d.segment_offset, d.preset_2, d.gamma_2),
      mix(d.source_b, d.segment_offset, d.preset_1, d.gamma_1),
  };
  q.check_invariants();
  return q;
}

}  // namespace reverbswap
