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

#include "reverbswap/conv.h"

#include <Eigen/Core>
#include <algorithm>
#include <memory>

namespace reverbswap {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Upper bound on im2col buffer elements per tile.
constexpr std::size_t kTileElements = std::size_t{1} << 21;

// Row sums in a fixed order. Vectorized reductions split the sum by buffer
// alignment, so their rounding would depend on the heap.
template <typename T>
void add_row_sums(const Tensor<T>& m, int rows, int cols, Tensor<T>& out) {
  for (int r = 0; r < rows; ++r) {
    const T* p = m.data() + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int i = 0; i < cols; ++i) acc += p[i];
    out[r] += static_cast<T>(acc);
  }
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return -floor_div(-a, b); }

// Visits the output pixels [p0, p0 + n) of an (oh x ow) grid one output
// row at a time. For kernel tap (i, j), f(q, seg, src_row, lo, hi) receives
// the column offset q, the run length seg, the input row index (or -1 when
// it falls in the padding) and the sub-range [lo, hi) of the run, relative
// to q, whose input column lies inside the image.
template <typename F>
void for_each_run(int h, int w, const ConvGeometry& g, int ow, int p0, int n,
                  int i, int j, F&& f) {
  int q = 0, oy = p0 / ow, ox = p0 % ow;
  const int first_valid = ceil_div(g.pw - j, g.sw);
  const int last_valid = floor_div(w - 1 + g.pw - j, g.sw);
  while (q < n) {
    const int seg = std::min(ow - ox, n - q);
    const int y = oy * g.sh - g.ph + i;
    if (y < 0 || y >= h) {
      f(q, seg, -1, 0, 0);
    } else {
      const int lo = std::clamp(first_valid - ox, 0, seg);
      const int hi = std::clamp(last_valid + 1 - ox, lo, seg);
      f(q, seg, y, lo, hi);
    }
    q += seg;
    ++oy;
    ox = 0;
  }
}

// Image [C, H, W] patches for output pixels [p0, p0 + n) of an
// (oh x ow) output grid, as a (C*KH*KW) x n matrix.
template <typename T>
void im2col(const T* img, int channels, int h, int w, const ConvGeometry& g,
            int ow, int p0, int n, T* cols) {
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        T* row = cols + (static_cast<std::size_t>(c * g.kh + i) * g.kw + j) * n;
        int ox0 = p0 % ow;
        for_each_run(h, w, g, ow, p0, n, i, j,
                     [&](int q, int seg, int y, int lo, int hi) {
                       T* dst = row + q;
                       std::fill(dst, dst + lo, T(0));
                       if (y >= 0) {
                         const T* src = plane + static_cast<std::size_t>(y) * w +
                                        (ox0 + lo) * g.sw - g.pw + j;
                         if (g.sw == 1) {
                           std::copy(src, src + (hi - lo), dst + lo);
                         } else {
                           for (int k = lo; k < hi; ++k) dst[k] = src[(k - lo) * g.sw];
                         }
                       }
                       std::fill(dst + hi, dst + seg, T(0));
                       ox0 = 0;
                     });
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int channels, int h, int w, const ConvGeometry& g,
            int ow, int p0, int n, T* img) {
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const T* row =
            cols + (static_cast<std::size_t>(c * g.kh + i) * g.kw + j) * n;
        int ox0 = p0 % ow;
        for_each_run(h, w, g, ow, p0, n, i, j,
                     [&](int q, int, int y, int lo, int hi) {
                       if (y >= 0) {
                         const T* src = row + q;
                         T* dst = plane + static_cast<std::size_t>(y) * w +
                                  (ox0 + lo) * g.sw - g.pw + j;
                         for (int k = lo; k < hi; ++k) dst[(k - lo) * g.sw] += src[k];
                       }
                       ox0 = 0;
                     });
      }
    }
  }
}

int tile_width(std::size_t k, int pixels) {
  std::size_t n = std::max<std::size_t>(1, kTileElements / std::max<std::size_t>(k, 1));
  return static_cast<int>(std::min<std::size_t>(n, pixels));
}

void check_rank(const char* what, int rank, int expected) {
  if (rank != expected) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(expected));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, const ConvGeometry& g) {
  check_rank("conv2d input", x.rank(), 3);
  check_rank("conv2d weight", w.rank(), 4);
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != g.kh || w.dim(3) != g.kw ||
      b.size() != static_cast<std::size_t>(cout)) {
    throw ShapeError("conv2d weight " + shape_str(w.shape()) +
                     " does not fit input " + shape_str(x.shape()));
  }
  const int oh = g.out_h(h), ow = g.out_w(wd);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d output would be empty");
  const int pixels = oh * ow;
  const std::size_t k = static_cast<std::size_t>(cin) * g.kh * g.kw;

  Tensor<T> y({cout, oh, ow});
  MapMat<T> ym(y.data(), cout, pixels);
  CMapMat<T> wm(w.data(), cout, k);
  const int tile = tile_width(k, pixels);
  RowMat<T> cols(k, tile);
  for (int p0 = 0; p0 < pixels; p0 += tile) {
    const int n = std::min(tile, pixels - p0);
    MapMat<T> cm(cols.data(), k, n);
    im2col(x.data(), cin, h, wd, g, ow, p0, n, cm.data());
    ym.middleCols(p0, n).noalias() = wm * cm;
  }
  for (int c = 0; c < cout; ++c) ym.row(c).array() += b[c];
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                     const ConvGeometry& g, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dw, Tensor<T>* db) {
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0);
  const int oh = dy.dim(1), ow = dy.dim(2);
  const int pixels = oh * ow;
  const std::size_t k = static_cast<std::size_t>(cin) * g.kh * g.kw;
  CMapMat<T> dym(dy.data(), cout, pixels);
  CMapMat<T> wm(w.data(), cout, k);

  if (db) {
    add_row_sums(dy, cout, pixels, *db);
  }
  if (!dx && !dw) return;
  const int tile = tile_width(k, pixels);
  RowMat<T> cols(k, tile);
  std::unique_ptr<MapMat<T>> dwm;
  if (dw) dwm = std::make_unique<MapMat<T>>(dw->data(), cout, k);
  for (int p0 = 0; p0 < pixels; p0 += tile) {
    const int n = std::min(tile, pixels - p0);
    MapMat<T> cm(cols.data(), k, n);
    if (dw) {
      im2col(x.data(), cin, h, wd, g, ow, p0, n, cm.data());
      dwm->noalias() += dym.middleCols(p0, n) * cm.transpose();
    }
    if (dx) {
      cm.noalias() = wm.transpose() * dym.middleCols(p0, n);
      col2im(cm.data(), cin, h, wd, g, ow, p0, n, dx->data());
    }
  }
}

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                                   const Tensor<T>& b, const ConvGeometry& g,
                                   int out_h, int out_w) {
  check_rank("conv_transpose2d input", x.rank(), 3);
  check_rank("conv_transpose2d weight", w.rank(), 4);
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(1);
  if (w.dim(0) != cin || w.dim(2) != g.kh || w.dim(3) != g.kw ||
      b.size() != static_cast<std::size_t>(cout)) {
    throw ShapeError("conv_transpose2d weight " + shape_str(w.shape()) +
                     " does not fit input " + shape_str(x.shape()));
  }
  if (g.out_h(out_h) != h || g.out_w(out_w) != wd) {
    throw ShapeError("conv_transpose2d output size inconsistent with input");
  }
  const int pixels = h * wd;
  const std::size_t k = static_cast<std::size_t>(cout) * g.kh * g.kw;

  Tensor<T> y({cout, out_h, out_w});
  CMapMat<T> xm(x.data(), cin, pixels);
  CMapMat<T> wm(w.data(), cin, k);
  const int tile = tile_width(k, pixels);
  RowMat<T> cols(k, tile);
  for (int p0 = 0; p0 < pixels; p0 += tile) {
    const int n = std::min(tile, pixels - p0);
    MapMat<T> cm(cols.data(), k, n);
    cm.noalias() = wm.transpose() * xm.middleCols(p0, n);
    col2im(cm.data(), cout, out_h, out_w, g, wd, p0, n, y.data());
  }
  MapMat<T> ym(y.data(), cout, static_cast<std::size_t>(out_h) * out_w);
  for (int c = 0; c < cout; ++c) ym.row(c).array() += b[c];
  return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                               const ConvGeometry& g, const Tensor<T>& dy,
                               Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(1);
  const int out_h = dy.dim(1), out_w = dy.dim(2);
  const int pixels = h * wd;
  const std::size_t k = static_cast<std::size_t>(cout) * g.kh * g.kw;

  if (db) {
    add_row_sums(dy, cout, out_h * out_w, *db);
  }
  if (!dx && !dw) return;
  CMapMat<T> xm(x.data(), cin, pixels);
  CMapMat<T> wm(w.data(), cin, k);
  std::unique_ptr<MapMat<T>> dxm, dwm;
  if (dx) dxm = std::make_unique<MapMat<T>>(dx->data(), cin, pixels);
  if (dw) dwm = std::make_unique<MapMat<T>>(dw->data(), cin, k);
  const int tile = tile_width(k, pixels);
  RowMat<T> cols(k, tile);
  for (int p0 = 0; p0 < pixels; p0 += tile) {
    const int n = std::min(tile, pixels - p0);
    MapMat<T> cm(cols.data(), k, n);
    im2col(dy.data(), cout, out_h, out_w, g, wd, p0, n, cm.data());
    if (dx) dxm->middleCols(p0, n).noalias() += wm * cm;
    if (dw) dwm->noalias() += xm.middleCols(p0, n) * cm.transpose();
  }
}

#define REVERBSWAP_INSTANTIATE_CONV(T)                                       \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&,      \
                                    const Tensor<T>&, const ConvGeometry&);  \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&,          \
                                const ConvGeometry&, const Tensor<T>&,       \
                                Tensor<T>*, Tensor<T>*, Tensor<T>*);         \
  template Tensor<T> conv_transpose2d_forward(                               \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                  \
      const ConvGeometry&, int, int);                                        \
  template void conv_transpose2d_backward(                                   \
      const Tensor<T>&, const Tensor<T>&, const ConvGeometry&,               \
      const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);

REVERBSWAP_INSTANTIATE_CONV(float)
REVERBSWAP_INSTANTIATE_CONV(double)

#undef REVERBSWAP_INSTANTIATE_CONV

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace reverbswap
