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

#include "reverbswap/model.h"

#include <cmath>

#include "reverbswap/rng.h"

namespace reverbswap {

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.channels = {8, 16, 32, 64, 128};
  c.input_bins = 256;
  c.input_frames = 128;
  return c;
}

ModelConfig ModelConfig::grad_check() {
  ModelConfig c;
  c.channels = {4, 8, 16, 32, 64};
  // 128 x 96 halves cleanly five times and leaves a 4 x 3 bottleneck for
  // the discriminator head.
  c.input_bins = 128;
  c.input_frames = 96;
  return c;
}

void ModelConfig::validate() const {
  if (input_channels <= 0) throw ShapeError("input_channels must be positive");
  if (channels.empty()) throw ShapeError("model needs at least one layer");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] <= 0 || channels[i] % 2 != 0) {
      throw ShapeError("channel counts must be positive and even");
    }
    if (i > 0 && channels[i] != 2 * channels[i - 1]) {
      throw ShapeError("channel counts must double per layer");
    }
  }
  if (first_kernel % 2 == 0 || kernel % 2 == 0) {
    throw ShapeError("kernels must be odd");
  }
  if (se_reduction <= 0) throw ShapeError("se_reduction must be positive");
  const int div = 1 << n_layers();
  if (input_bins <= 0 || input_frames <= 0 || input_bins % div != 0 ||
      input_frames % div != 0) {
    throw ShapeError("input " + std::to_string(input_bins) + "x" +
                     std::to_string(input_frames) + " is not divisible by " +
                     std::to_string(div));
  }
  if (layer_bins(n_layers() - 1) < disc_grid_h ||
      layer_frames(n_layers() - 1) < disc_grid_w) {
    throw ShapeError("bottleneck smaller than the discriminator grid");
  }
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["input_channels"] = c.input_channels;
  j["channels"] = c.channels;
  j["first_kernel"] = c.first_kernel;
  j["kernel"] = c.kernel;
  j["se_reduction"] = c.se_reduction;
  j["input_bins"] = c.input_bins;
  j["input_frames"] = c.input_frames;
  j["disc_grid_h"] = c.disc_grid_h;
  j["disc_grid_w"] = c.disc_grid_w;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_channels = j.value("input_channels", c.input_channels);
  c.channels = j.value("channels", c.channels);
  c.first_kernel = j.value("first_kernel", c.first_kernel);
  c.kernel = j.value("kernel", c.kernel);
  c.se_reduction = j.value("se_reduction", c.se_reduction);
  c.input_bins = j.value("input_bins", c.input_bins);
  c.input_frames = j.value("input_frames", c.input_frames);
  c.disc_grid_h = j.value("disc_grid_h", c.disc_grid_h);
  c.disc_grid_w = j.value("disc_grid_w", c.disc_grid_w);
  c.validate();
  return c;
}

template <typename T>
ReverbSwapNet<T>::ReverbSwapNet(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int n = cfg_.n_layers();
  const auto& ch = cfg_.channels;

  encoder_ = make_trunk(gen_, "enc", mix_seed(seed, 1));

  decoder_.resize(n);
  for (int i = n - 1; i >= 0; --i) {
    // Level n-1 takes the swapped bottleneck; levels 1..n-2 take the
    // upsampled map plus a swapped skip; level 0 gets no skip.
    const bool has_skip = i > 0 && i < n - 1;
    const int in = has_skip ? 2 * ch[i] : ch[i];
    const int up = i > 0 ? ch[i - 1] : ch[0];
    const int k = cfg_.kernel_for(i);
    const std::string name = "dec." + std::to_string(i);
    const std::uint64_t s = mix_seed({seed, 2, static_cast<std::uint64_t>(i)});
    Block& b = decoder_[i];
    b.conv = make_conv(gen_, name + ".conv", in, ch[i], k, 1, false, s);
    b.se = make_se(gen_, name + ".se", ch[i], mix_seed(s, 1));
    b.resize = make_conv(gen_, name + ".up", ch[i], up, k, 2, true,
                         mix_seed(s, 2));
  }
  projection_ = make_conv(gen_, "dec.out", ch[0], cfg_.input_channels, 1, 1,
                          false, mix_seed(seed, 3));

  disc_trunk_ = make_trunk(disc_, "disc", mix_seed(seed, 4));
  {
    const std::uint64_t s = mix_seed(seed, 5);
    const int cin = ch.back();
    const double fan_in = double(cin) * cfg_.disc_grid_h * cfg_.disc_grid_w;
    disc_head_.weight =
        add_param(disc_, "disc.head.weight",
                  {1, cin, cfg_.disc_grid_h, cfg_.disc_grid_w},
                  std::sqrt(3.0 / fan_in), s);
    disc_head_.bias = add_param(disc_, "disc.head.bias", {1},
                                1.0 / std::sqrt(fan_in), mix_seed(s, 1));
    disc_head_.geom = {cfg_.disc_grid_h, cfg_.disc_grid_w, 1, 1, 0, 0};
  }
}

template <typename T>
int ReverbSwapNet<T>::add_param(std::vector<Param<T>>& store, std::string name,
                                Shape shape, double bound, std::uint64_t seed) {
  Tensor<T> v(std::move(shape));
  Rng rng(seed);
  for (auto& x : v.vec()) x = static_cast<T>(rng.uniform(-bound, bound));
  store.emplace_back(std::move(name), std::move(v));
  return static_cast<int>(store.size()) - 1;
}

template <typename T>
typename ReverbSwapNet<T>::ConvLayer ReverbSwapNet<T>::make_conv(
    std::vector<Param<T>>& store, const std::string& name, int cin, int cout,
    int k, int stride, bool transposed, std::uint64_t seed) {
  ConvLayer c;
  c.geom = same_geometry(k, stride);
  // A transposed conv's output pixel sees cin * k * k / stride^2 inputs on
  // average.
  const double fan_in = double(cin) * k * k / (transposed ? stride * stride : 1);
  const Shape shape = transposed ? Shape{cin, cout, k, k} : Shape{cout, cin, k, k};
  c.weight = add_param(store, name + ".weight", shape, std::sqrt(6.0 / fan_in),
                       seed);
  c.bias = add_param(store, name + ".bias", {cout}, 1.0 / std::sqrt(fan_in),
                     mix_seed(seed, 1));
  return c;
}

template <typename T>
typename ReverbSwapNet<T>::SeLayer ReverbSwapNet<T>::make_se(
    std::vector<Param<T>>& store, const std::string& name, int channels,
    std::uint64_t seed) {
  const int hidden = std::max(1, channels / cfg_.se_reduction);
  SeLayer s;
  s.w1 = add_param(store, name + ".fc1.weight", {hidden, channels},
                   std::sqrt(6.0 / channels), seed);
  s.b1 = add_param(store, name + ".fc1.bias", {hidden},
                   1.0 / std::sqrt(double(channels)), mix_seed(seed, 1));
  s.w2 = add_param(store, name + ".fc2.weight", {channels, hidden},
                   std::sqrt(3.0 / hidden), mix_seed(seed, 2));
  s.b2 = add_param(store, name + ".fc2.bias", {channels},
                   1.0 / std::sqrt(double(hidden)), mix_seed(seed, 3));
  return s;
}

template <typename T>
std::vector<typename ReverbSwapNet<T>::Block> ReverbSwapNet<T>::make_trunk(
    std::vector<Param<T>>& store, const std::string& prefix,
    std::uint64_t seed) {
  std::vector<Block> blocks(cfg_.n_layers());
  int cin = cfg_.input_channels;
  for (int i = 0; i < cfg_.n_layers(); ++i) {
    const int c = cfg_.channels[i];
    const int k = cfg_.kernel_for(i);
    const std::string name = prefix + "." + std::to_string(i);
    const std::uint64_t s = mix_seed({seed, static_cast<std::uint64_t>(i)});
    blocks[i].conv = make_conv(store, name + ".conv", cin, c, k, 1, false, s);
    blocks[i].se = make_se(store, name + ".se", c, mix_seed(s, 1));
    blocks[i].resize = make_conv(store, name + ".down", c, c, k, 2, false,
                                 mix_seed(s, 2));
    cin = c;
  }
  return blocks;
}

template <typename T>
Var ReverbSwapNet<T>::apply_conv(Tape<T>& t, std::vector<Param<T>>& store,
                                 const ConvLayer& c, Var x) {
  return ops::conv2d(t, x, t.param(store[c.weight]), t.param(store[c.bias]),
                     c.geom);
}

template <typename T>
Var ReverbSwapNet<T>::apply_se(Tape<T>& t, std::vector<Param<T>>& store,
                               const SeLayer& s, Var x) {
  Var z = ops::global_avg_pool(t, x);
  z = ops::relu(t, ops::linear(t, z, t.param(store[s.w1]), t.param(store[s.b1])));
  z = ops::sigmoid(t, ops::linear(t, z, t.param(store[s.w2]), t.param(store[s.b2])));
  return ops::channel_scale(t, x, z);
}

template <typename T>
std::vector<Var> ReverbSwapNet<T>::run_trunk(Tape<T>& t,
                                             std::vector<Param<T>>& store,
                                             const std::vector<Block>& blocks,
                                             Var x) {
  std::vector<Var> out;
  out.reserve(blocks.size());
  for (const Block& b : blocks) {
    x = ops::relu(t, apply_conv(t, store, b.conv, x));
    x = apply_se(t, store, b.se, x);
    x = ops::relu(t, apply_conv(t, store, b.resize, x));
    out.push_back(x);
  }
  return out;
}

template <typename T>
void ReverbSwapNet<T>::check_input(const Tensor<T>& x) const {
  if (x.shape() != cfg_.input_shape()) {
    throw ShapeError("model input " + shape_str(x.shape()) + ", expected " +
                     shape_str(cfg_.input_shape()));
  }
}

template <typename T>
void ReverbSwapNet<T>::check_stack(const LatentStack<T>& s) const {
  if (static_cast<int>(s.layers.size()) != cfg_.n_layers()) {
    throw ShapeError("latent stack has " + std::to_string(s.layers.size()) +
                     " layers, expected " + std::to_string(cfg_.n_layers()));
  }
  for (int i = 0; i < cfg_.n_layers(); ++i) {
    const Shape want{cfg_.channels[i], cfg_.layer_bins(i), cfg_.layer_frames(i)};
    if (s.layers[i].shape() != want) {
      throw ShapeError("latent layer " + std::to_string(i) + " is " +
                       shape_str(s.layers[i].shape()) + ", expected " +
                       shape_str(want));
    }
  }
}

template <typename T>
std::vector<Var> ReverbSwapNet<T>::encode(Tape<T>& t, Var x) {
  check_input(t.value(x));
  return run_trunk(t, gen_, encoder_, x);
}

template <typename T>
Var ReverbSwapNet<T>::swap_and_decode(Tape<T>& t, const std::vector<Var>& self,
                                      const std::vector<Var>& reference) {
  const int n = cfg_.n_layers();
  if (static_cast<int>(self.size()) != n ||
      static_cast<int>(reference.size()) != n) {
    throw ShapeError("swap_and_decode: stacks must have " + std::to_string(n) +
                     " layers");
  }
  auto swapped = [&](int i) {
    const int c = cfg_.channels[i];
    return ops::concat_channels(t, ops::slice_channels(t, self[i], 0, c / 2),
                                ops::slice_channels(t, reference[i], c / 2, c));
  };
  Var x = swapped(n - 1);
  for (int i = n - 1; i >= 0; --i) {
    if (i > 0 && i < n - 1) x = ops::concat_channels(t, x, swapped(i));
    const Block& b = decoder_[i];
    x = ops::relu(t, apply_conv(t, gen_, b.conv, x));
    x = apply_se(t, gen_, b.se, x);
    const int oh = i > 0 ? cfg_.layer_bins(i - 1) : cfg_.input_bins;
    const int ow = i > 0 ? cfg_.layer_frames(i - 1) : cfg_.input_frames;
    x = ops::relu(t, ops::conv_transpose2d(t, x, t.param(gen_[b.resize.weight]),
                                           t.param(gen_[b.resize.bias]),
                                           b.resize.geom, oh, ow));
  }
  return ops::relu(t, apply_conv(t, gen_, projection_, x));
}

template <typename T>
Var ReverbSwapNet<T>::discriminate(Tape<T>& t, Var x) {
  check_input(t.value(x));
  Var h = run_trunk(t, disc_, disc_trunk_, x).back();
  h = ops::adaptive_max_pool(t, h, cfg_.disc_grid_h, cfg_.disc_grid_w);
  h = apply_conv(t, disc_, disc_head_, h);  // [1, 1, 1]
  return ops::sigmoid(t, ops::reshape(t, h, Shape{1}));
}

template <typename T>
LatentStack<T> ReverbSwapNet<T>::encode(const Tensor<T>& x) {
  Tape<T> t;
  t.freeze(all_params());
  LatentStack<T> s;
  for (Var v : encode(t, t.constant(x))) s.layers.push_back(t.value(v));
  return s;
}

template <typename T>
Tensor<T> ReverbSwapNet<T>::swap_and_decode(const LatentStack<T>& self,
                                            const LatentStack<T>& reference) {
  check_stack(self);
  check_stack(reference);
  Tape<T> t;
  t.freeze(all_params());
  std::vector<Var> a, b;
  for (const auto& l : self.layers) a.push_back(t.constant(l));
  for (const auto& l : reference.layers) b.push_back(t.constant(l));
  return t.value(swap_and_decode(t, a, b));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> ReverbSwapNet<T>::convert(const Tensor<T>& a,
                                                          const Tensor<T>& b) {
  Tape<T> t;
  t.freeze(all_params());
  auto ea = encode(t, t.constant(a));
  auto eb = encode(t, t.constant(b));
  Var oa = swap_and_decode(t, ea, eb);
  Var ob = swap_and_decode(t, eb, ea);
  return {t.value(oa), t.value(ob)};
}

template <typename T>
T ReverbSwapNet<T>::discriminate(const Tensor<T>& x) {
  Tape<T> t;
  t.freeze(all_params());
  return t.value(discriminate(t, t.constant(x)))[0];
}

template <typename T>
ParamList<T> ReverbSwapNet<T>::generator_params() {
  ParamList<T> out;
  for (auto& p : gen_) out.push_back(&p);
  return out;
}

template <typename T>
ParamList<T> ReverbSwapNet<T>::discriminator_params() {
  ParamList<T> out;
  for (auto& p : disc_) out.push_back(&p);
  return out;
}

template <typename T>
ParamList<T> ReverbSwapNet<T>::all_params() {
  ParamList<T> out = generator_params();
  for (auto* p : discriminator_params()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t ReverbSwapNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : gen_) n += p.value.size();
  for (const auto& p : disc_) n += p.value.size();
  return n;
}

template <typename T>
std::map<std::string, Tensor<T>> ReverbSwapNet<T>::export_params() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& p : gen_) out.emplace(p.name, p.value);
  for (const auto& p : disc_) out.emplace(p.name, p.value);
  return out;
}

template <typename T>
void ReverbSwapNet<T>::import_params(
    const std::map<std::string, Tensor<T>>& named) {
  for (auto* p : all_params()) {
    auto it = named.find(p->name);
    if (it == named.end()) throw ShapeError("missing parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw ShapeError("parameter " + p->name + " has shape " +
                       shape_str(it->second.shape()) + ", expected " +
                       shape_str(p->value.shape()));
    }
    p->value = it->second;
  }
}

template <typename T>
Tensor<T> to_tensor(const MagnitudeSpectrogram& m) {
  const Plane3& v = m.values;
  Tensor<T> x({v.channels(), v.bins(), static_cast<int>(v.frames())});
  std::transform(v.values().begin(), v.values().end(), x.vec().begin(),
                 [](double d) { return static_cast<T>(d); });
  return x;
}

template <typename T>
MagnitudeSpectrogram to_magnitude(const Tensor<T>& x, const StftConfig& cfg) {
  if (x.rank() != 3) throw ShapeError("magnitude tensor must be [C, F, T]");
  MagnitudeSpectrogram m;
  m.config = cfg;
  m.values = Plane3(x.dim(0), x.dim(1), x.dim(2));
  std::transform(x.vec().begin(), x.vec().end(), m.values.values().begin(),
                 [](T v) { return static_cast<double>(v); });
  return m;
}

template class ReverbSwapNet<float>;
template class ReverbSwapNet<double>;
template Tensor<float> to_tensor<float>(const MagnitudeSpectrogram&);
template Tensor<double> to_tensor<double>(const MagnitudeSpectrogram&);
template MagnitudeSpectrogram to_magnitude(const Tensor<float>&, const StftConfig&);
template MagnitudeSpectrogram to_magnitude(const Tensor<double>&, const StftConfig&);

}  // namespace reverbswap
