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

// 2-D convolution kernels on single [C, H, W] examples. Both directions go
// through tiled im2col/col2im and a GEMM, so memory stays bounded on the
// 1024 x 640 canonical input.

#ifndef REVERBSWAP_CONV_H_
#define REVERBSWAP_CONV_H_

#include "reverbswap/tensor.h"

namespace reverbswap {

struct ConvGeometry {
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  int ph = 1, pw = 1;

  int out_h(int h) const { return (h + 2 * ph - kh) / sh + 1; }
  int out_w(int w) const { return (w + 2 * pw - kw) / sw + 1; }
};

// "Same" geometry for odd square kernels; stride 2 halves even sizes.
inline ConvGeometry same_geometry(int k, int stride) {
  return {k, k, stride, stride, k / 2, k / 2};
}

// y = conv(x, w) + b. x: [Cin, H, W], w: [Cout, Cin, KH, KW], b: [Cout].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, const ConvGeometry& g);

// Accumulates into whichever of dx / dw / db is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                     const ConvGeometry& g, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dw, Tensor<T>* db);

// Adjoint of conv2d with geometry g, producing an [Cout, out_h, out_w] map
// from x: [Cin, H, W]. w: [Cin, Cout, KH, KW].
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                                   const Tensor<T>& b, const ConvGeometry& g,
                                   int out_h, int out_w);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                               const ConvGeometry& g, const Tensor<T>& dy,
                               Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db);

}  // namespace reverbswap

#endif  // REVERBSWAP_CONV_H_
