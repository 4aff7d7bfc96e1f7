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

// Minimal reverse-mode differentiation over single-example [C, H, W]
// tensors. A Tape records every op of one forward pass; backward() walks it
// in reverse and accumulates leaf gradients into the owning Param.

#ifndef REVERBSWAP_AUTOGRAD_H_
#define REVERBSWAP_AUTOGRAD_H_

#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "reverbswap/conv.h"
#include "reverbswap/tensor.h"

namespace reverbswap {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Parameters registered here enter the graph without gradient tracking.
  void freeze(const ParamList<T>& params);

  Var constant(Tensor<T> value);
  // One leaf per Param per tape, shared by every use.
  Var param(Param<T>& p);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = scale for a single-element loss and
  // propagates; Param grads receive the accumulated leaf gradients.
  void backward(Var loss, T scale = T(1));
  // Gradient that reached an arbitrary node during the last backward().
  const Tensor<T>* grad(Var v) const;

  // Records a node; `backward` receives the tape so it can reach operand
  // values and gradients.
  Var record(Tensor<T> value, bool requires_grad,
             std::function<void(Tape&, const Tensor<T>& grad)> backward);
  // Gradient buffer of v, allocated on first use.
  Tensor<T>& grad_buffer(Var v);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;  // parameter leaves alias their Param
    Param<T>* param = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::function<void(Tape&, const Tensor<T>&)> backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Param<T>*, int> param_ids_;
  std::unordered_set<const Param<T>*> frozen_;
};

namespace ops {

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, const ConvGeometry& g);
template <typename T>
Var conv_transpose2d(Tape<T>& t, Var x, Var w, Var b, const ConvGeometry& g,
                     int out_h, int out_w);
template <typename T>
Var relu(Tape<T>& t, Var x);
template <typename T>
Var sigmoid(Tape<T>& t, Var x);
// [C, H, W] -> [C]
template <typename T>
Var global_avg_pool(Tape<T>& t, Var x);
// v: [in], w: [out, in], b: [out] -> [out]
template <typename T>
Var linear(Tape<T>& t, Var v, Var w, Var b);
// x: [C, H, W] scaled per channel by s: [C]
template <typename T>
Var channel_scale(Tape<T>& t, Var x, Var s);
template <typename T>
Var concat_channels(Tape<T>& t, Var a, Var b);
template <typename T>
Var slice_channels(Tape<T>& t, Var x, int begin, int end);
// Max pooling of [C, H, W] onto an (out_h x out_w) grid. Window size is
// floor(H / out_h); the last window along each axis absorbs the remainder.
template <typename T>
Var adaptive_max_pool(Tape<T>& t, Var x, int out_h, int out_w);
// mean|a - b| + mean((a - b)^2), as a 1-element tensor.
template <typename T>
Var l1_l2_distance(Tape<T>& t, Var a, Var b);
template <typename T>
Var add(Tape<T>& t, Var a, Var b);
template <typename T>
Var scale(Tape<T>& t, Var a, T k);
// Same elements under a new shape of equal size.
template <typename T>
Var reshape(Tape<T>& t, Var a, Shape shape);
template <typename T>
Var mean_all(Tape<T>& t, Var a);
// log(clamp(p, eps, 1 - eps)) and log(1 - clamp(p, eps, 1 - eps)); the
// gradient is zero where the clamp is active.
template <typename T>
Var log_clamped(Tape<T>& t, Var p, T eps);
template <typename T>
Var log1m_clamped(Tape<T>& t, Var p, T eps);

}  // namespace ops

}  // namespace reverbswap

#endif  // REVERBSWAP_AUTOGRAD_H_
