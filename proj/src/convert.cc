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

#include "reverbswap/convert.h"

#include <algorithm>

namespace reverbswap {

std::size_t segment_samples(const ModelConfig& model, const StftConfig& stft) {
  return static_cast<std::size_t>(model.input_frames) * stft.hop;
}

std::vector<Waveform> pad_segments(const Waveform& w, std::size_t seg) {
  std::vector<Waveform> out;
  for (std::size_t start = 0; start < w.frames(); start += seg) {
    Waveform s(w.channels(), seg, w.sample_rate());
    const std::size_t n = std::min(seg, w.frames() - start);
    for (int c = 0; c < w.channels(); ++c) {
      auto src = w.channel(c).subspan(start, n);
      std::copy(src.begin(), src.end(), s.channel(c).begin());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Waveform> reference_segments(const Waveform& w, std::size_t seg) {
  if (w.frames() >= seg) return segment(w, seg, seg);
  return pad_segments(w, seg);
}

Waveform convert_track(ReverbSwapNet<float>& net, const StftConfig& stft_cfg,
                       const Waveform& input, const Waveform& reference) {
  if (input.empty() || reference.empty()) {
    throw AudioError("conversion needs nonempty input and reference");
  }
  if (input.sample_rate() != kCanonicalSampleRate ||
      reference.sample_rate() != kCanonicalSampleRate) {
    throw AudioError("conversion runs at 44100 Hz");
  }
  const Waveform in = input.to_stereo();
  const Waveform ref = reference.to_stereo();
  const std::size_t seg = segment_samples(net.config(), stft_cfg);
  const auto in_segs = pad_segments(in, seg);
  const auto ref_segs = reference_segments(ref, seg);

  Waveform out(2, in.frames(), in.sample_rate());
  for (std::size_t i = 0; i < in_segs.size(); ++i) {
    const StftResult a = stft(in_segs[i], stft_cfg);
    const StftResult b = stft(ref_segs[i % ref_segs.size()], stft_cfg);
    auto [out_a, out_b] =
        net.convert(to_tensor<float>(a.magnitude), to_tensor<float>(b.magnitude));
    const Waveform y =
        istft(to_magnitude(out_a, stft_cfg), a.phase, seg, in.sample_rate());
    const std::size_t start = i * seg;
    const std::size_t n = std::min(seg, in.frames() - start);
    for (int c = 0; c < 2; ++c) {
      auto src = y.channel(c).subspan(0, n);
      std::copy(src.begin(), src.end(), out.channel(c).begin() + start);
    }
  }
  return input.channels() == 1 ? out.downmix() : out;
}

}  // namespace reverbswap
