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

#include "synth_vocal.h"

#include <array>
#include <cmath>
#include <fstream>

#include "reverbswap/databus.h"
#include "reverbswap/rng.h"

namespace reverbswap::testing {

namespace {

struct Vowel {
  std::array<double, 3> freq;
  std::array<double, 3> bw;
};

constexpr std::array<Vowel, 5> kVowels{{
    {{730, 1090, 2440}, {90, 110, 160}},  // a
    {{530, 1840, 2480}, {60, 100, 120}},  // e
    {{270, 2290, 3010}, {60, 90, 100}},   // i
    {{570, 840, 2410}, {70, 80, 110}},    // o
    {{300, 870, 2240}, {65, 80, 110}},    // u
}};

double formant_gain(const Vowel& v, double f) {
  double g = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = (f - v.freq[k]) / v.bw[k];
    g += std::pow(0.5, k) / (1.0 + d * d);
  }
  // Glottal tilt, about -12 dB per octave above 100 Hz.
  return g / (1.0 + (f / 100.0) * (f / 100.0) * 0.05);
}

}  // namespace

Waveform synth_vocal(std::size_t frames, std::uint64_t seed, int rate) {
  Rng rng(mix_seed(seed, 0x766f63ULL));
  const double fs = rate;
  const double base_f0 = rng.uniform(120.0, 280.0);
  const double vib_rate = rng.uniform(4.5, 6.5);
  const double vib_depth = rng.uniform(0.01, 0.025);
  const double syl_len = rng.uniform(0.18, 0.32) * fs;

  Waveform out(2, frames, rate);
  std::vector<double> mono(frames, 0.0);
  double phase = 0.0;
  std::size_t syl_start = 0;
  std::size_t syl_end = 0;
  const Vowel* vowel = &kVowels[0];
  const Vowel* next_vowel = vowel;
  double syl_pitch = 1.0;
  bool pause = false;
  for (std::size_t n = 0; n < frames; ++n) {
    if (n >= syl_end) {
      syl_start = n;
      syl_end = n + static_cast<std::size_t>(syl_len * rng.uniform(0.7, 1.3));
      vowel = next_vowel;
      next_vowel = &kVowels[rng.index(kVowels.size())];
      syl_pitch = std::pow(2.0, (static_cast<double>(rng.index(7)) - 3.0) / 12.0);
      pause = rng.uniform() < 0.2;
    }
    const double pos = double(n - syl_start) / double(syl_end - syl_start);
    const double env =
        pause ? 0.0 : std::pow(std::sin(M_PI * pos), 0.6) * (0.7 + 0.3 * pos);
    const double t = n / fs;
    const double f0 = base_f0 * syl_pitch *
                      (1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * t));
    phase += 2.0 * M_PI * f0 / fs;
    if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
    if (env <= 0.0) continue;
    // Blend toward the next vowel over the syllable.
    Vowel v;
    for (int k = 0; k < 3; ++k) {
      v.freq[k] = vowel->freq[k] + pos * (next_vowel->freq[k] - vowel->freq[k]);
      v.bw[k] = vowel->bw[k];
    }
    double s = 0.0;
    const int harmonics = std::min(60, static_cast<int>(5000.0 / f0));
    for (int h = 1; h <= harmonics; ++h) {
      s += formant_gain(v, h * f0) * std::sin(h * phase);
    }
    mono[n] = env * s;
  }
  // Breath noise, then normalize.
  double peak = 0.0;
  for (std::size_t n = 0; n < frames; ++n) {
    mono[n] += 0.002 * (rng.uniform() * 2.0 - 1.0);
    peak = std::max(peak, std::abs(mono[n]));
  }
  const double g = peak > 0.0 ? 0.5 / peak : 0.0;
  const double pan = rng.uniform(-0.2, 0.2);
  for (std::size_t n = 0; n < frames; ++n) {
    out.at(0, n) = g * mono[n] * (1.0 - pan);
    out.at(1, n) = g * (n > 0 ? 0.3 * mono[n - 1] + 0.7 * mono[n] : mono[n]) *
                   (1.0 + pan) * 0.95;
  }
  return out;
}

Waveform white_noise(const Waveform& like, double amp, std::uint64_t seed) {
  Rng rng(seed);
  Waveform w(like.channels(), like.frames(), like.sample_rate());
  for (auto& v : w.data()) v = amp * (2.0 * rng.uniform() - 1.0);
  return w;
}

TempDir::TempDir(const std::string& tag) {
  Rng rng(std::random_device{}());
  path_ = std::filesystem::temp_directory_path() /
          ("reverbswap_" + tag + "_" + std::to_string(rng.next() % 1000000007));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path write_vocal_corpus(const std::filesystem::path& dir,
                                         int count, std::size_t frames,
                                         std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  for (int i = 0; i < count; ++i) {
    auto p = dir / ("vocal" + std::to_string(i) + ".wav");
    save_wav(synth_vocal(frames, mix_seed(seed, i)), p);
    files.push_back(p.filename());
  }
  const auto list = dir / "corpus.txt";
  write_corpus(files, list);
  return list;
}

}  // namespace reverbswap::testing
