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

#include "reverbswap/stft.h"

#include <cmath>
#include <complex>

#include "reverbswap/fft.h"

namespace reverbswap {

void StftConfig::validate() const {
  if (win_len <= 0 || hop <= 0 || fft_size <= 0) {
    throw StftError("STFT sizes must be positive");
  }
  if (hop * 4 != win_len) throw StftError("hop must equal win_len / 4");
  if (fft_size < win_len) throw StftError("fft_size must be >= win_len");
  if (fft_size % 2 != 0) throw StftError("fft_size must be even");
}

std::vector<double> hamming_window(int n) {
  // Periodic form: the 75%-overlap sum of squares is then constant.
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / n);
  }
  return w;
}

namespace {

// Index into x of the padded signal position j (reflect padding, repeated
// for signals shorter than the pad).
long reflect_index(long j, long len) {
  if (len == 1) return 0;
  const long period = 2 * (len - 1);
  j %= period;
  if (j < 0) j += period;
  return j < len ? j : period - j;
}

}  // namespace

StftResult stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  if (w.empty()) throw StftError("cannot analyse an empty waveform");
  const std::size_t frames = cfg.frames_for(w.frames());
  const int bins = cfg.full_bins();
  const auto window = hamming_window(cfg.win_len);
  const long offset = cfg.center ? cfg.win_len / 2 : 0;
  const long len = static_cast<long>(w.frames());

  StftResult r;
  r.magnitude.config = cfg;
  r.phase.config = cfg;
  r.magnitude.values = Plane3(w.channels(), cfg.model_bins(), frames);
  r.magnitude.nyquist = Plane3(w.channels(), 1, frames);
  r.phase.values = Plane3(w.channels(), bins, frames);

  RealFft fft(cfg.fft_size);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spec(bins);
  for (int c = 0; c < w.channels(); ++c) {
    auto x = w.channel(c);
    for (std::size_t t = 0; t < frames; ++t) {
      const long start = static_cast<long>(t) * cfg.hop - offset;
      for (int i = 0; i < cfg.win_len; ++i) {
        long j = start + i;
        double v = 0.0;
        if (cfg.center) {
          v = x[reflect_index(j, len)];
        } else if (j >= 0 && j < len) {
          v = x[j];
        }
        frame[i] = v * window[i];
      }
      fft.forward(frame, spec);
      for (int f = 0; f < bins; ++f) {
        double mag = std::abs(spec[f]);
        if (f < cfg.model_bins()) {
          r.magnitude.values.at(c, f, t) = mag;
        } else {
          r.magnitude.nyquist->at(c, 0, t) = mag;
        }
        double ph = std::arg(spec[f]);
        r.phase.values.at(c, f, t) = ph <= -M_PI ? M_PI : ph;
      }
    }
  }
  return r;
}

Waveform istft(const MagnitudeSpectrogram& mag, const PhaseSpectrogram& phase,
               std::size_t out_len, int sample_rate) {
  const StftConfig& cfg = phase.config;
  cfg.validate();
  if (!(mag.config == cfg)) throw StftError("STFT configuration mismatch");
  const Plane3& m = mag.values;
  const Plane3& p = phase.values;
  if (m.channels() != p.channels() || m.frames() != p.frames() ||
      m.bins() != cfg.model_bins() || p.bins() != cfg.full_bins()) {
    throw StftError("magnitude/phase shape mismatch");
  }
  if (mag.nyquist && (mag.nyquist->channels() != m.channels() ||
                      mag.nyquist->frames() != m.frames())) {
    throw StftError("nyquist plane shape mismatch");
  }
  if (out_len == 0) throw StftError("output length must be positive");

  const std::size_t frames = m.frames();
  const int bins = cfg.full_bins();
  const auto window = hamming_window(cfg.win_len);
  const long offset = cfg.center ? cfg.win_len / 2 : 0;
  const std::size_t buf_len = (frames - 1) * cfg.hop + cfg.win_len;

  Waveform out(m.channels(), out_len, sample_rate);
  RealFft fft(cfg.fft_size);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> frame(cfg.fft_size);
  std::vector<double> norm(buf_len, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (int i = 0; i < cfg.win_len; ++i) {
      norm[t * cfg.hop + i] += window[i] * window[i];
    }
  }

  std::vector<double> buf(buf_len);
  for (int c = 0; c < m.channels(); ++c) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (int f = 0; f < bins; ++f) {
        double a = 0.0;
        if (f < cfg.model_bins()) {
          a = m.at(c, f, t);
        } else if (mag.nyquist) {
          a = mag.nyquist->at(c, 0, t);
        }
        spec[f] = std::polar(a, p.at(c, f, t));
      }
      // A real signal's DC and Nyquist bins are real.
      spec[0] = {spec[0].real(), 0.0};
      spec[bins - 1] = {spec[bins - 1].real(), 0.0};
      fft.inverse(spec, frame);
      for (int i = 0; i < cfg.win_len; ++i) {
        buf[t * cfg.hop + i] += frame[i] / cfg.fft_size * window[i];
      }
    }
    auto dst = out.channel(c);
    for (std::size_t n = 0; n < out_len; ++n) {
      std::size_t j = n + offset;
      if (j < buf_len && norm[j] > 1e-12) dst[n] = buf[j] / norm[j];
    }
  }
  return out;
}

}  // namespace reverbswap
