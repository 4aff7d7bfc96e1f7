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

// Dual-input U-Net that swaps the reverb channels of two encodings, plus
// the scalar discriminator used for adversarial training.
//
// Every encoder layer output is split channel-wise: the first half carries
// the source, the second half the reverb. Decoding input A against
// reference B feeds the decoder A's source halves and B's reverb halves.

#ifndef REVERBSWAP_MODEL_H_
#define REVERBSWAP_MODEL_H_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "reverbswap/autograd.h"
#include "reverbswap/stft.h"
#include "reverbswap/tensor.h"

namespace reverbswap {

struct ModelConfig {
  int input_channels = 2;
  std::vector<int> channels{32, 64, 128, 256, 512};
  int first_kernel = 5;  // both convs of the outermost block
  int kernel = 3;
  int se_reduction = 16;
  int input_bins = 1024;
  int input_frames = 640;
  int disc_grid_h = 4;  // discriminator head kernel
  int disc_grid_w = 3;

  static ModelConfig canonical() { return {}; }
  // Desk-scale configuration paired with the "tiny" STFT profile.
  static ModelConfig tiny();
  // Small float64 configuration for finite-difference checks.
  static ModelConfig grad_check();

  int n_layers() const { return static_cast<int>(channels.size()); }
  int kernel_for(int layer) const { return layer == 0 ? first_kernel : kernel; }
  // Spatial size of encoder layer `layer` (0-based) output.
  int layer_bins(int layer) const { return input_bins >> (layer + 1); }
  int layer_frames(int layer) const { return input_frames >> (layer + 1); }
  Shape input_shape() const { return {input_channels, input_bins, input_frames}; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Encoder outputs, outermost layer first.
template <typename T>
struct LatentStack {
  std::vector<Tensor<T>> layers;
};

template <typename T>
Tensor<T> source_half(const Tensor<T>& x) {
  return channel_slice(x, 0, x.dim(0) / 2);
}
template <typename T>
Tensor<T> reverb_half(const Tensor<T>& x) {
  return channel_slice(x, x.dim(0) / 2, x.dim(0));
}

template <typename T>
class ReverbSwapNet {
 public:
  ReverbSwapNet(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  ParamList<T> generator_params();
  ParamList<T> discriminator_params();
  ParamList<T> all_params();
  std::size_t parameter_count() const;

  // Graph construction. The encoder returns one Var per layer.
  std::vector<Var> encode(Tape<T>& t, Var x);
  // `reference` may equal `self` for the reconstruction path.
  Var swap_and_decode(Tape<T>& t, const std::vector<Var>& self,
                      const std::vector<Var>& reference);
  // [1]-shaped probability.
  Var discriminate(Tape<T>& t, Var x);

  // Inference wrappers; build a throwaway tape with every parameter frozen.
  LatentStack<T> encode(const Tensor<T>& x);
  Tensor<T> swap_and_decode(const LatentStack<T>& self,
                            const LatentStack<T>& reference);
  std::pair<Tensor<T>, Tensor<T>> convert(const Tensor<T>& a,
                                          const Tensor<T>& b);
  T discriminate(const Tensor<T>& x);

  // Name-keyed parameter export/import. Import ignores unknown names and
  // throws ShapeError on a missing name or a shape mismatch.
  std::map<std::string, Tensor<T>> export_params() const;
  void import_params(const std::map<std::string, Tensor<T>>& named);

  // Throws ShapeError unless x matches the configured input shape.
  void check_input(const Tensor<T>& x) const;
  void check_stack(const LatentStack<T>& s) const;

 private:
  struct ConvLayer {
    int weight = -1, bias = -1;
    ConvGeometry geom;
  };
  struct SeLayer {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
  };
  struct Block {
    ConvLayer conv;
    SeLayer se;
    ConvLayer resize;  // stride-2 conv (encoder) or transposed conv (decoder)
  };

  int add_param(std::vector<Param<T>>& store, std::string name, Shape shape,
                double bound, std::uint64_t seed);
  ConvLayer make_conv(std::vector<Param<T>>& store, const std::string& name,
                      int cin, int cout, int k, int stride, bool transposed,
                      std::uint64_t seed);
  SeLayer make_se(std::vector<Param<T>>& store, const std::string& name,
                  int channels, std::uint64_t seed);
  std::vector<Block> make_trunk(std::vector<Param<T>>& store,
                                const std::string& prefix, std::uint64_t seed);

  Var apply_conv(Tape<T>& t, std::vector<Param<T>>& store, const ConvLayer& c,
                 Var x);
  Var apply_se(Tape<T>& t, std::vector<Param<T>>& store, const SeLayer& s,
               Var x);
  std::vector<Var> run_trunk(Tape<T>& t, std::vector<Param<T>>& store,
                             const std::vector<Block>& blocks, Var x);

  ModelConfig cfg_;
  std::vector<Param<T>> gen_;
  std::vector<Param<T>> disc_;
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;  // outermost level first
  ConvLayer projection_;
  std::vector<Block> disc_trunk_;
  ConvLayer disc_head_;
};

// [C, F, T] network tensor view of a magnitude spectrogram and back.
template <typename T>
Tensor<T> to_tensor(const MagnitudeSpectrogram& m);
template <typename T>
MagnitudeSpectrogram to_magnitude(const Tensor<T>& x, const StftConfig& cfg);

}  // namespace reverbswap

#endif  // REVERBSWAP_MODEL_H_
