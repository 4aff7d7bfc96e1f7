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

#ifndef REVERBSWAP_AUDIO_IO_H_
#define REVERBSWAP_AUDIO_IO_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reverbswap {

inline constexpr int kCanonicalSampleRate = 44100;

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multi-channel PCM audio. Samples are stored channel-major, so channel c
// occupies [c * frames, (c + 1) * frames).
class Waveform {
 public:
  Waveform() = default;
  Waveform(int channels, std::size_t frames, int sample_rate);

  int channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  int sample_rate() const { return sample_rate_; }
  bool empty() const { return frames_ == 0; }

  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  double& at(int c, std::size_t i) { return samples_[c * frames_ + i]; }
  double at(int c, std::size_t i) const { return samples_[c * frames_ + i]; }

  std::span<double> data() { return samples_; }
  std::span<const double> data() const { return samples_; }

  double peak() const;
  bool all_finite() const;

  // Frames [start, start + count) of every channel.
  Waveform slice(std::size_t start, std::size_t count) const;
  // Mean of all channels as a single-channel waveform.
  Waveform downmix() const;
  Waveform to_stereo() const;

  bool operator==(const Waveform&) const = default;

 private:
  int channels_ = 0;
  std::size_t frames_ = 0;
  int sample_rate_ = 0;
  std::vector<double> samples_;
};

// Reads a RIFF/WAVE file. Integer PCM (16/24/32-bit) and 32-bit IEEE float
// are accepted; integer codes are divided by 2^(bits-1).
Waveform load_wav(const std::filesystem::path& path);

// Writes 16-bit PCM. Samples are clipped to [-1, 1 - 2^-15] before
// quantization.
void save_wav(const Waveform& w, const std::filesystem::path& path,
              int bits = 16);

// Band-limited (Kaiser-windowed sinc) sample-rate conversion. Output length
// is round(frames * target / source).
Waveform resample(const Waveform& w, int target_rate);

// Consecutive windows of seg_frames, hop_frames apart. A trailing
// remainder shorter than seg_frames is dropped.
std::vector<Waveform> segment(const Waveform& w, std::size_t seg_frames,
                              std::size_t hop_frames);

struct IngestOptions {
  bool allow_resample = false;
};

// Brings a loaded file to the canonical model format: stereo at 44.1 kHz.
// Mono is duplicated. Other rates are rejected unless allow_resample is set.
Waveform ingest(Waveform w, const IngestOptions& opts = {});

inline Waveform load_canonical(const std::filesystem::path& path,
                               const IngestOptions& opts = {}) {
  return ingest(load_wav(path), opts);
}

}  // namespace reverbswap

#endif  // REVERBSWAP_AUDIO_IO_H_
