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

// Whole-track reverb conversion. The input is cut into non-overlapping
// model-sized segments (the last one zero-padded), each segment is
// converted against a reference segment, and the output magnitude is
// resynthesized with the input's phase. Reference segments are reused
// cyclically when the reference is shorter than the input.

#ifndef REVERBSWAP_CONVERT_H_
#define REVERBSWAP_CONVERT_H_

#include <cstddef>
#include <vector>

#include "reverbswap/audio_io.h"
#include "reverbswap/model.h"
#include "reverbswap/stft.h"

namespace reverbswap {

// Samples per model segment: input_frames hops.
std::size_t segment_samples(const ModelConfig& model, const StftConfig& stft);

// Zero-padded segments covering all of w.
std::vector<Waveform> pad_segments(const Waveform& w, std::size_t seg);
// Whole segments of w, or a single zero-padded one when w is shorter.
std::vector<Waveform> reference_segments(const Waveform& w, std::size_t seg);

// Output has the input's length, rate and channel count. Both signals must
// be at the canonical rate.
Waveform convert_track(ReverbSwapNet<float>& net, const StftConfig& stft,
                       const Waveform& input, const Waveform& reference);

}  // namespace reverbswap

#endif  // REVERBSWAP_CONVERT_H_
