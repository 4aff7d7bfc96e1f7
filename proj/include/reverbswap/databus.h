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

// Reverb-bus mixing and training-quad assembly.
//
// A track is mixed as (src + gamma * wet) / (gamma + 1), with the wet signal
// rendered 100% wet. A quad pairs two sources with two reverbs:
//
//   in_a = s_a r_1   in_b = s_b r_2   gt_a = s_a r_2   gt_b = s_b r_1
//
// Quads live on disk only as descriptors and are rendered on demand.

#ifndef REVERBSWAP_DATABUS_H_
#define REVERBSWAP_DATABUS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reverbswap/audio_io.h"
#include "reverbswap/reverb.h"
#include "reverbswap/stft.h"

namespace reverbswap {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Send ratios 0.00, 0.05, ..., 0.75.
inline constexpr int kGammaSteps = 16;
inline double gamma_value(int step) { return step / 20.0; }
// Grid index of `gamma`, or -1 when it is off the grid.
int gamma_step(double gamma);
// Reference preset id used for dry (gamma = 0) tracks.
inline constexpr const char* kDryPresetId = "dry";

struct MixSpec {
  std::string source_id;
  std::string preset_id;
  double gamma = 0.0;

  void validate() const;  // throws DataError when gamma is off the grid
  bool operator==(const MixSpec&) const = default;
};

struct MixedTrack {
  MixSpec spec;
  Waveform audio;
};

struct TrainingQuad {
  MixedTrack in_a;  // s_a r_1
  MixedTrack in_b;  // s_b r_2
  MixedTrack gt_a;  // s_a r_2
  MixedTrack gt_b;  // s_b r_1

  // Throws DataError if source/preset/gamma sharing is violated.
  void check_invariants() const;
};

Waveform mix_bus(const Waveform& src, const Waveform& rev, double gamma);

struct QuadOptions {
  // Required dry clip length; 0 accepts any common length.
  std::size_t clip_frames = kCanonicalClipSamples;
  std::string source_a = "a";
  std::string source_b = "b";
};

TrainingQuad build_quad(const Waveform& dry_a, const Waveform& dry_b,
                        const ReverbPreset& p1, const ReverbPreset& p2,
                        double gamma_1, double gamma_2,
                        const QuadOptions& opts = {});

// (input, reference): the reference is dry_ref mixed at gamma 0.
std::pair<MixedTrack, MixedTrack> make_derev_pair(const MixedTrack& in,
                                                  const Waveform& dry_ref,
                                                  std::string ref_id = "ref");

struct QuadDescriptor {
  std::string quad_id;
  std::string source_a;
  std::string source_b;
  std::string preset_1;
  std::string preset_2;
  double gamma_1 = 0.0;
  double gamma_2 = 0.0;
  // Non-overlapping clip index into each source, taken modulo the number
  // of whole clips the source holds.
  std::uint64_t segment_offset = 0;
  std::uint64_t seed = 0;

  bool operator==(const QuadDescriptor&) const = default;
};

// Draws `count` descriptors: distinct sources per quad, presets uniform over
// `presets`, gammas independent and uniform over the grid.
std::vector<QuadDescriptor> make_dataset(const std::vector<std::string>& corpus,
                                         const std::vector<ReverbPreset>& presets,
                                         int count, std::uint64_t seed);

// Gammas for `epoch`: epoch 0 keeps the manifest values, later epochs
// redraw both from a stream keyed by (seed, epoch).
QuadDescriptor with_epoch_gammas(const QuadDescriptor& d, int epoch);

std::string descriptor_to_json_line(const QuadDescriptor& d);
QuadDescriptor descriptor_from_json_line(const std::string& line);
void write_manifest(const std::vector<QuadDescriptor>& quads,
                    const std::filesystem::path& path);
std::vector<QuadDescriptor> read_manifest(const std::filesystem::path& path);

// Dry corpus manifest: one WAV path per line, relative paths resolved
// against the manifest's directory. Blank lines and '#' comments skipped.
std::vector<std::filesystem::path> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::vector<std::filesystem::path>& files,
                  const std::filesystem::path& path);
// Source id of a corpus file: its stem.
std::string source_id_for(const std::filesystem::path& file);

// Renders quads from descriptors, caching wet renders per
// (source, clip, preset).
class QuadMaterializer {
 public:
  QuadMaterializer(std::map<std::string, Waveform> sources,
                   std::vector<ReverbPreset> presets, std::size_t clip_frames);

  TrainingQuad materialize(const QuadDescriptor& d);
  const Waveform& dry_clip(const std::string& source, std::uint64_t offset);
  const ReverbPreset& preset(const std::string& id) const;
  std::size_t clip_frames() const { return clip_frames_; }
  void clear_cache() { wet_.clear(); }

 private:
  const Waveform& wet_clip(const std::string& source, std::uint64_t offset,
                           const std::string& preset_id);
  MixedTrack mix(const std::string& source, std::uint64_t offset,
                 const std::string& preset_id, double gamma);

  std::map<std::string, Waveform> sources_;
  std::map<std::string, ReverbPreset> presets_;
  std::size_t clip_frames_;
  std::map<std::string, Waveform> dry_;
  std::map<std::string, Waveform> wet_;
};

// Loads every corpus file at the canonical rate, keyed by source id.
std::map<std::string, Waveform> load_sources(
    const std::vector<std::filesystem::path>& files,
    const IngestOptions& opts = {});

}  // namespace reverbswap

#endif  // REVERBSWAP_DATABUS_H_
