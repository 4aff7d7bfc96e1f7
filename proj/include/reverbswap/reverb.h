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

// Parametric feedback-delay-network reverb used to synthesize 100%-wet
// renders for dataset generation.

#ifndef REVERBSWAP_REVERB_H_
#define REVERBSWAP_REVERB_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reverbswap/audio_io.h"

namespace reverbswap {

class ReverbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EarlyTap {
  double delay_ms = 0.0;  // after the pre-delay
  double gain = 0.0;
  bool operator==(const EarlyTap&) const = default;
};

struct ReverbPreset {
  std::string preset_id;
  double rt60 = 1.0;            // seconds, [0.3, 6.0]
  double pre_delay_ms = 0.0;    // [0, 120]
  int fdn_size = 8;             // 8 or 16
  std::vector<int> delay_lengths;  // samples @ 44.1 kHz, distinct primes
  double damping_cutoff = 6000.0;  // Hz, [2000, 12000]
  double diffusion = 0.5;          // [0, 1]
  double stereo_width = 1.0;       // [0, 1]
  std::vector<EarlyTap> early_reflection_taps;

  // Throws ReverbError on any violated range or structural invariant.
  void validate() const;
  bool operator==(const ReverbPreset&) const = default;
};

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool operator==(const ParamRange&) const = default;
};

enum class SplitTag { kTrain, kVal };

// Sampling ranges for one dataset split. The train and validation spaces use
// different FDN sizes, so validation reverbs are structurally unseen.
struct PresetSpace {
  SplitTag split = SplitTag::kTrain;
  ParamRange rt60{0.3, 6.0};
  ParamRange pre_delay_ms{0.0, 120.0};
  std::vector<int> fdn_sizes{8};
  ParamRange delay_ms{20.0, 90.0};
  ParamRange damping_cutoff{2000.0, 12000.0};
  ParamRange diffusion{0.0, 1.0};
  ParamRange stereo_width{0.0, 1.0};
  int max_early_taps = 6;
  ParamRange early_delay_ms{1.0, 40.0};
  ParamRange early_gain{0.05, 0.3};

  static PresetSpace train();
  static PresetSpace validation();
  void validate() const;
  std::string split_name() const {
    return split == SplitTag::kTrain ? "train" : "val";
  }
};

inline constexpr int kTrainPresetCount = 36;
inline constexpr int kValPresetCount = 4;

ReverbPreset sample_preset(const PresetSpace& space, std::uint64_t seed);

// `count` presets named "<split>-NN", each drawn with a seed derived from
// (seed, index).
std::vector<ReverbPreset> generate_presets(const PresetSpace& space, int count,
                                           std::uint64_t seed);

// Streaming FDN reverb. Construction measures the late-tail energy once so
// the rendered IR has unit energy (averaged over the two channels).
class ReverbEngine {
 public:
  explicit ReverbEngine(ReverbPreset preset);

  const ReverbPreset& preset() const { return preset_; }

  // Fully wet stereo response to the mono downmix of `dry`, truncated to
  // dry's length. `dry` must be at 44.1 kHz.
  Waveform process(const Waveform& dry) const;
  Waveform impulse_response(std::size_t length) const;

  // Largest per-line loop gain over frequency; < 1 for a stable network.
  double max_loop_gain() const;
  // The orthogonal feedback matrix, row-major N x N.
  std::vector<double> feedback_matrix() const;

 private:
  Waveform run(std::span<const double> mono, bool late_only) const;

  ReverbPreset preset_;
  std::vector<double> loop_gain_;    // per-line DC gain
  std::vector<double> loop_pole_;    // per-line absorption pole
  double late_scale_ = 1.0;
};

// Stereo impulse response of `p`. `length` must cover at least rt60 seconds.
Waveform impulse_response(const ReverbPreset& p, std::size_t length);

Waveform render_wet(const Waveform& dry, const ReverbPreset& p);

// Schroeder backward integration of the summed channel energy, in dB
// relative to the total.
std::vector<double> schroeder_decay_db(const Waveform& ir);

// RT60 extrapolated from a least-squares fit of the decay curve between
// `from_db` and `to_db` (defaults: T20 fit).
double estimate_rt60(const Waveform& ir, double from_db = -5.0,
                     double to_db = -25.0);

// One JSON object per line, every field explicit.
void write_presets(const std::vector<ReverbPreset>& presets,
                   const std::filesystem::path& path);
std::vector<ReverbPreset> read_presets(const std::filesystem::path& path);
std::string preset_to_json_line(const ReverbPreset& p);
ReverbPreset preset_from_json_line(const std::string& line);

}  // namespace reverbswap

#endif  // REVERBSWAP_REVERB_H_
