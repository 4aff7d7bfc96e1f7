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

#ifndef REVERBSWAP_STFT_H_
#define REVERBSWAP_STFT_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "reverbswap/audio_io.h"

namespace reverbswap {

class StftError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hamming-windowed analysis with hop = win_len / 4. The canonical setting is
// 2048 / 512 / 2048; smaller settings are used for desk-scale models.
struct StftConfig {
  int win_len = 2048;
  int hop = 512;
  int fft_size = 2048;
  bool center = true;

  // Bins handed to the network: the half spectrum without its Nyquist bin.
  int model_bins() const { return fft_size / 2; }
  int full_bins() const { return fft_size / 2 + 1; }
  std::size_t frames_for(std::size_t samples) const {
    return (samples + hop - 1) / hop;
  }
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

// 640 hops of 512 samples: 7.4304 s at 44.1 kHz.
inline constexpr std::size_t kCanonicalFrames = 640;
inline constexpr std::size_t kCanonicalClipSamples = kCanonicalFrames * 512;

// Dense [channels x bins x frames] array, frame index fastest.
class Plane3 {
 public:
  Plane3() = default;
  Plane3(int channels, int bins, std::size_t frames)
      : channels_(channels),
        bins_(bins),
        frames_(frames),
        values_(static_cast<std::size_t>(channels) * bins * frames, 0.0) {}

  int channels() const { return channels_; }
  int bins() const { return bins_; }
  std::size_t frames() const { return frames_; }
  std::size_t size() const { return values_.size(); }

  double& at(int c, int f, std::size_t t) {
    return values_[(static_cast<std::size_t>(c) * bins_ + f) * frames_ + t];
  }
  double at(int c, int f, std::size_t t) const {
    return values_[(static_cast<std::size_t>(c) * bins_ + f) * frames_ + t];
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Plane3& o) const {
    return channels_ == o.channels_ && bins_ == o.bins_ &&
           frames_ == o.frames_;
  }

 private:
  int channels_ = 0;
  int bins_ = 0;
  std::size_t frames_ = 0;
  std::vector<double> values_;
};

struct MagnitudeSpectrogram {
  Plane3 values;  // [channels x model_bins x frames], nonnegative
  // Nyquist-bin magnitudes [channels x 1 x frames] retained by analysis so
  // that own-phase resynthesis is exact. Network outputs carry none, and
  // synthesis then treats the Nyquist bin as zero.
  std::optional<Plane3> nyquist;
  StftConfig config;
};

struct PhaseSpectrogram {
  Plane3 values;  // [channels x full_bins x frames], radians in (-pi, pi]
  StftConfig config;
};

struct StftResult {
  MagnitudeSpectrogram magnitude;
  PhaseSpectrogram phase;
};

StftResult stft(const Waveform& w, const StftConfig& cfg = {});

// Weighted overlap-add resynthesis normalized by the summed squared
// synthesis window. Output is trimmed or zero-padded to out_len frames.
Waveform istft(const MagnitudeSpectrogram& mag, const PhaseSpectrogram& phase,
               std::size_t out_len, int sample_rate = kCanonicalSampleRate);

std::vector<double> hamming_window(int n);

}  // namespace reverbswap

#endif  // REVERBSWAP_STFT_H_
