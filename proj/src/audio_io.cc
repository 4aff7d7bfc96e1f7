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

#include "reverbswap/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

namespace reverbswap {

Waveform::Waveform(int channels, std::size_t frames, int sample_rate)
    : channels_(channels),
      frames_(frames),
      sample_rate_(sample_rate),
      samples_(static_cast<std::size_t>(channels) * frames, 0.0) {
  if (channels < 1 || channels > 2) {
    throw AudioError("waveform must have 1 or 2 channels, got " +
                     std::to_string(channels));
  }
  if (sample_rate <= 0) throw AudioError("sample rate must be positive");
}

std::span<double> Waveform::channel(int c) {
  return std::span<double>(samples_).subspan(c * frames_, frames_);
}

std::span<const double> Waveform::channel(int c) const {
  return std::span<const double>(samples_).subspan(c * frames_, frames_);
}

double Waveform::peak() const {
  double p = 0.0;
  for (double s : samples_) p = std::max(p, std::abs(s));
  return p;
}

bool Waveform::all_finite() const {
  return std::all_of(samples_.begin(), samples_.end(),
                     [](double s) { return std::isfinite(s); });
}

Waveform Waveform::slice(std::size_t start, std::size_t count) const {
  if (start + count > frames_) throw AudioError("slice out of range");
  Waveform out(channels_, count, sample_rate_);
  for (int c = 0; c < channels_; ++c) {
    auto src = channel(c).subspan(start, count);
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

Waveform Waveform::downmix() const {
  Waveform out(1, frames_, sample_rate_);
  auto dst = out.channel(0);
  for (int c = 0; c < channels_; ++c) {
    auto src = channel(c);
    for (std::size_t i = 0; i < frames_; ++i) dst[i] += src[i];
  }
  for (double& s : dst) s /= channels_;
  return out;
}

Waveform Waveform::to_stereo() const {
  if (channels_ == 2) return *this;
  Waveform out(2, frames_, sample_rate_);
  auto src = channel(0);
  std::copy(src.begin(), src.end(), out.channel(0).begin());
  std::copy(src.begin(), src.end(), out.channel(1).begin());
  return out;
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError("not a RIFF/WAVE file" + where);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::size_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw AudioError("truncated fmt chunk" + where);
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (avail < 26) throw AudioError("truncated extensible fmt" + where);
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw AudioError("missing fmt chunk" + where);
  if (data == nullptr) throw AudioError("missing data chunk" + where);
  if (format != kFormatPcm && format != kFormatFloat) {
    throw AudioError("unsupported (non-PCM) encoding " +
                     std::to_string(format) + where);
  }
  const bool is_float = format == kFormatFloat;
  if ((is_float && bits != 32) ||
      (!is_float && bits != 16 && bits != 24 && bits != 32)) {
    throw AudioError("unsupported bit depth " + std::to_string(bits) + where);
  }
  if (channels < 1 || channels > 2) {
    throw AudioError("unsupported channel count " + std::to_string(channels) +
                     where);
  }
  if (rate == 0) throw AudioError("zero sample rate" + where);

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_size / (bytes_per_sample * channels);
  Waveform w(channels, frames, static_cast<int>(rate));
  const double scale = std::ldexp(1.0, -(bits - 1));
  for (std::size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p =
          data + (i * channels + c) * bytes_per_sample;
      double v = 0.0;
      if (is_float) {
        float f;
        std::uint32_t u = read_u32(p);
        std::memcpy(&f, &u, 4);
        v = f;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(read_u16(p)) * scale;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s -= 0x1000000;
        v = s * scale;
      } else {
        v = static_cast<std::int32_t>(read_u32(p)) * scale;
      }
      w.at(c, i) = v;
    }
  }
  if (!w.all_finite()) throw AudioError("non-finite samples" + where);
  return w;
}

void save_wav(const Waveform& w, const std::filesystem::path& path,
              int bits) {
  if (bits != 16) throw AudioError("only 16-bit output is supported");
  if (!w.all_finite()) throw AudioError("refusing to write non-finite audio");
  const std::size_t data_bytes = w.frames() * w.channels() * 2;
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, static_cast<std::uint32_t>(36 + data_bytes));
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(w.channels()));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate() * w.channels() * 2));
  put_u16(out, static_cast<std::uint16_t>(w.channels() * 2));
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, static_cast<std::uint32_t>(data_bytes));
  constexpr double kMax = 1.0 - 1.0 / 32768.0;
  for (std::size_t i = 0; i < w.frames(); ++i) {
    for (int c = 0; c < w.channels(); ++c) {
      double v = std::clamp(w.at(c, i), -1.0, kMax);
      auto code = static_cast<std::int16_t>(std::lround(v * 32768.0));
      put_u16(out, static_cast<std::uint16_t>(code));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw AudioError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw AudioError("write failed for " + path.string());
}

namespace {

// Kaiser-windowed sinc kernel with kZeroCrossings zero crossings per side
// of the (possibly narrowed) cutoff.
constexpr int kZeroCrossings = 32;
constexpr double kKaiserBeta = 8.6;

double kaiser(double x) {  // x in [-1, 1]
  double r = 1.0 - x * x;
  if (r <= 0.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

}  // namespace

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw AudioError("target rate must be positive");
  const int source_rate = w.sample_rate();
  if (target_rate == source_rate) return w;

  const auto out_frames = static_cast<std::size_t>(std::llround(
      static_cast<double>(w.frames()) * target_rate / source_rate));
  Waveform out(w.channels(), out_frames, target_rate);

  // Cutoff slightly below the lower Nyquist so the transition band of the
  // Kaiser window stays out of the passband edge.
  const double ratio = static_cast<double>(target_rate) / source_rate;
  const double cutoff = 0.97 * std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const int taps = static_cast<int>(std::ceil(half_width));

  // Output n sits at input position n * up/down; the fractional phase cycles
  // with period `up`, so kernels are tabulated per phase.
  const int g = std::gcd(source_rate, target_rate);
  const long up = target_rate / g;
  const long down = source_rate / g;
  const bool tabulate = up <= 4096;
  std::vector<double> table;
  const int span = 2 * taps + 1;
  auto kernel = [&](double offset) {
    return cutoff * sinc(cutoff * offset) * kaiser(offset / half_width);
  };
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up) * span);
    for (long ph = 0; ph < up; ++ph) {
      double frac = static_cast<double>(ph) / up;
      for (int k = -taps; k <= taps; ++k) {
        table[ph * span + (k + taps)] = kernel(k - frac);
      }
    }
  }

  const auto n_in = static_cast<long>(w.frames());
  for (int c = 0; c < w.channels(); ++c) {
    auto src = w.channel(c);
    auto dst = out.channel(c);
    for (std::size_t n = 0; n < out_frames; ++n) {
      long num = static_cast<long>(n) * down;
      long base = num / up;
      long ph = num % up;
      double frac = static_cast<double>(ph) / up;
      double acc = 0.0;
      for (int k = -taps; k <= taps; ++k) {
        long idx = base + k;
        if (idx < 0 || idx >= n_in) continue;
        double h = tabulate ? table[ph * span + (k + taps)] : kernel(k - frac);
        acc += h * src[idx];
      }
      dst[n] = acc;
    }
  }
  return out;
}

std::vector<Waveform> segment(const Waveform& w, std::size_t seg_frames,
                              std::size_t hop_frames) {
  if (seg_frames == 0 || hop_frames == 0) {
    throw AudioError("segment and hop lengths must be positive");
  }
  std::vector<Waveform> out;
  if (w.frames() < seg_frames) return out;
  const std::size_t count = (w.frames() - seg_frames) / hop_frames + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(w.slice(i * hop_frames, seg_frames));
  }
  return out;
}

Waveform ingest(Waveform w, const IngestOptions& opts) {
  if (w.sample_rate() != kCanonicalSampleRate) {
    if (!opts.allow_resample) {
      throw AudioError("sample rate " + std::to_string(w.sample_rate()) +
                       " Hz is not 44100 Hz; pass the resample option to "
                       "convert it");
    }
    w = resample(w, kCanonicalSampleRate);
  }
  return w.to_stereo();
}

}  // namespace reverbswap
