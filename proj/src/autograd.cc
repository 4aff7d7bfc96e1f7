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

#include "reverbswap/autograd.h"

#include <cmath>

namespace reverbswap {

template <typename T>
void Tape<T>::freeze(const ParamList<T>& params) {
  for (const auto* p : params) frozen_.insert(p);
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, bool requires_grad,
                    std::function<void(Tape&, const Tensor<T>&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), false, nullptr);
}

template <typename T>
Var Tape<T>::param(Param<T>& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return Var{it->second};
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.requires_grad = !frozen_.count(&p);
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_[&p] = id;
  return Var{id};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Tensor<T>(value(v).shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>* Tape<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? &n.grad : nullptr;
}

template <typename T>
void Tape<T>::backward(Var loss, T scale) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward() needs a single-element loss");
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss)[0] += scale;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param) {
      auto& dst = n.param->grad.vec();
      const auto& src = n.grad.vec();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else if (n.backward) {
      // Operands always precede their result on the tape, so their grad
      // buffers are complete before they are visited.
      n.backward(*this, n.grad);
    }
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ops {

namespace {

template <typename T>
bool any_grad(const Tape<T>& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (t.requires_grad(v)) return true;
  }
  return false;
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, const ConvGeometry& g) {
  Tensor<T> y = conv2d_forward(t.value(x), t.value(w), t.value(b), g);
  return t.record(std::move(y), any_grad(t, {x, w, b}),
                  [x, w, b, g](Tape<T>& tp, const Tensor<T>& dy) {
                    conv2d_backward(
                        tp.value(x), tp.value(w), g, dy,
                        tp.requires_grad(x) ? &tp.grad_buffer(x) : nullptr,
                        tp.requires_grad(w) ? &tp.grad_buffer(w) : nullptr,
                        tp.requires_grad(b) ? &tp.grad_buffer(b) : nullptr);
                  });
}

template <typename T>
Var conv_transpose2d(Tape<T>& t, Var x, Var w, Var b, const ConvGeometry& g,
                     int out_h, int out_w) {
  Tensor<T> y = conv_transpose2d_forward(t.value(x), t.value(w), t.value(b),
                                         g, out_h, out_w);
  return t.record(std::move(y), any_grad(t, {x, w, b}),
                  [x, w, b, g](Tape<T>& tp, const Tensor<T>& dy) {
                    conv_transpose2d_backward(
                        tp.value(x), tp.value(w), g, dy,
                        tp.requires_grad(x) ? &tp.grad_buffer(x) : nullptr,
                        tp.requires_grad(w) ? &tp.grad_buffer(w) : nullptr,
                        tp.requires_grad(b) ? &tp.grad_buffer(b) : nullptr);
                  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Tensor<T> y = t.value(x);
  for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
  return t.record(std::move(y), t.requires_grad(x),
                  [x](Tape<T>& tp, const Tensor<T>& dy) {
                    const auto& xv = tp.value(x).vec();
                    auto& dx = tp.grad_buffer(x).vec();
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      if (xv[i] > T(0)) dx[i] += dy[i];
                    }
                  });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  Tensor<T> y = t.value(x);
  for (auto& v : y.vec()) v = T(1) / (T(1) + std::exp(-v));
  // The backward pass recomputes sigma(x) rather than holding the output id.
  return t.record(std::move(y), t.requires_grad(x),
                  [x](Tape<T>& tp, const Tensor<T>& dy) {
                    const auto& xv = tp.value(x).vec();
                    auto& dx = tp.grad_buffer(x).vec();
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      T s = T(1) / (T(1) + std::exp(-xv[i]));
                      dx[i] += dy[i] * s * (T(1) - s);
                    }
                  });
}

template <typename T>
Var global_avg_pool(Tape<T>& t, Var x) {
  const auto& xv = t.value(x);
  if (xv.rank() != 3) throw ShapeError("global_avg_pool expects [C, H, W]");
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y({c});
  for (int ch = 0; ch < c; ++ch) {
    T acc = 0;
    const T* p = xv.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    y[ch] = acc / static_cast<T>(plane);
  }
  return t.record(std::move(y), t.requires_grad(x),
                  [x, c, plane](Tape<T>& tp, const Tensor<T>& dy) {
                    auto& dx = tp.grad_buffer(x);
                    for (int ch = 0; ch < c; ++ch) {
                      T g = dy[ch] / static_cast<T>(plane);
                      T* p = dx.data() + ch * plane;
                      for (std::size_t i = 0; i < plane; ++i) p[i] += g;
                    }
                  });
}

template <typename T>
Var linear(Tape<T>& t, Var v, Var w, Var b) {
  const auto& vv = t.value(v);
  const auto& wv = t.value(w);
  const auto& bv = t.value(b);
  const int out = wv.dim(0), in = wv.dim(1);
  if (static_cast<int>(vv.size()) != in || static_cast<int>(bv.size()) != out) {
    throw ShapeError("linear: weight " + shape_str(wv.shape()) +
                     " does not fit input " + shape_str(vv.shape()));
  }
  Tensor<T> y({out});
  for (int o = 0; o < out; ++o) {
    T acc = bv[o];
    for (int i = 0; i < in; ++i) acc += wv[o * in + i] * vv[i];
    y[o] = acc;
  }
  return t.record(std::move(y), any_grad(t, {v, w, b}),
                  [v, w, b, out, in](Tape<T>& tp, const Tensor<T>& dy) {
                    const auto& vv = tp.value(v);
                    const auto& wv = tp.value(w);
                    if (tp.requires_grad(b)) {
                      auto& db = tp.grad_buffer(b);
                      for (int o = 0; o < out; ++o) db[o] += dy[o];
                    }
                    if (tp.requires_grad(w)) {
                      auto& dw = tp.grad_buffer(w);
                      for (int o = 0; o < out; ++o) {
                        for (int i = 0; i < in; ++i) dw[o * in + i] += dy[o] * vv[i];
                      }
                    }
                    if (tp.requires_grad(v)) {
                      auto& dv = tp.grad_buffer(v);
                      for (int o = 0; o < out; ++o) {
                        for (int i = 0; i < in; ++i) dv[i] += dy[o] * wv[o * in + i];
                      }
                    }
                  });
}

template <typename T>
Var channel_scale(Tape<T>& t, Var x, Var s) {
  const auto& xv = t.value(x);
  const auto& sv = t.value(s);
  if (xv.rank() != 3 || static_cast<int>(sv.size()) != xv.dim(0)) {
    throw ShapeError("channel_scale: bad operand shapes");
  }
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y = xv;
  for (int ch = 0; ch < c; ++ch) {
    T* p = y.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] *= sv[ch];
  }
  return t.record(std::move(y), any_grad(t, {x, s}),
                  [x, s, c, plane](Tape<T>& tp, const Tensor<T>& dy) {
                    const auto& xv = tp.value(x);
                    const auto& sv = tp.value(s);
                    if (tp.requires_grad(x)) {
                      auto& dx = tp.grad_buffer(x);
                      for (int ch = 0; ch < c; ++ch) {
                        const T* g = dy.data() + ch * plane;
                        T* d = dx.data() + ch * plane;
                        for (std::size_t i = 0; i < plane; ++i) d[i] += g[i] * sv[ch];
                      }
                    }
                    if (tp.requires_grad(s)) {
                      auto& ds = tp.grad_buffer(s);
                      for (int ch = 0; ch < c; ++ch) {
                        const T* g = dy.data() + ch * plane;
                        const T* xp = xv.data() + ch * plane;
                        T acc = 0;
                        for (std::size_t i = 0; i < plane; ++i) acc += g[i] * xp[i];
                        ds[ch] += acc;
                      }
                    }
                  });
}

template <typename T>
Var concat_channels(Tape<T>& t, Var a, Var b) {
  Tensor<T> y = channel_concat(t.value(a), t.value(b));
  const std::size_t na = t.value(a).size();
  return t.record(std::move(y), any_grad(t, {a, b}),
                  [a, b, na](Tape<T>& tp, const Tensor<T>& dy) {
                    if (tp.requires_grad(a)) {
                      auto& da = tp.grad_buffer(a).vec();
                      for (std::size_t i = 0; i < na; ++i) da[i] += dy[i];
                    }
                    if (tp.requires_grad(b)) {
                      auto& db = tp.grad_buffer(b).vec();
                      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[na + i];
                    }
                  });
}

template <typename T>
Var slice_channels(Tape<T>& t, Var x, int begin, int end) {
  const auto& xv = t.value(x);
  Tensor<T> y = channel_slice(xv, begin, end);
  const std::size_t offset =
      static_cast<std::size_t>(begin) * xv.dim(1) * xv.dim(2);
  return t.record(std::move(y), t.requires_grad(x),
                  [x, offset](Tape<T>& tp, const Tensor<T>& dy) {
                    auto& dx = tp.grad_buffer(x).vec();
                    for (std::size_t i = 0; i < dy.size(); ++i) dx[offset + i] += dy[i];
                  });
}

template <typename T>
Var adaptive_max_pool(Tape<T>& t, Var x, int out_h, int out_w) {
  const auto& xv = t.value(x);
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h < out_h || w < out_w) {
    throw ShapeError("adaptive_max_pool: input " + shape_str(xv.shape()) +
                     " smaller than output grid");
  }
  const int sh = h / out_h, sw = w / out_w;
  Tensor<T> y({c, out_h, out_w});
  std::vector<std::size_t> argmax(y.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < out_h; ++i) {
      const int y0 = i * sh, y1 = (i == out_h - 1) ? h : y0 + sh;
      for (int j = 0; j < out_w; ++j) {
        const int x0 = j * sw, x1 = (j == out_w - 1) ? w : x0 + sw;
        std::size_t best = (static_cast<std::size_t>(ch) * h + y0) * w + x0;
        for (int yy = y0; yy < y1; ++yy) {
          for (int xx = x0; xx < x1; ++xx) {
            std::size_t idx = (static_cast<std::size_t>(ch) * h + yy) * w + xx;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(ch) * out_h + i) * out_w + j;
        y[o] = xv[best];
        argmax[o] = best;
      }
    }
  }
  return t.record(std::move(y), t.requires_grad(x),
                  [x, argmax = std::move(argmax)](Tape<T>& tp, const Tensor<T>& dy) {
                    auto& dx = tp.grad_buffer(x);
                    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
                  });
}

template <typename T>
Var l1_l2_distance(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("distance between " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const auto n = static_cast<T>(av.size());
  // Extended accumulators keep loss values accurate to the last bit.
  long double l1 = 0, l2 = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const long double d = av[i] - bv[i];
    l1 += std::abs(d);
    l2 += d * d;
  }
  Tensor<T> y({1}, std::vector<T>{static_cast<T>((l1 + l2) / av.size())});
  return t.record(std::move(y), any_grad(t, {a, b}),
                  [a, b, n](Tape<T>& tp, const Tensor<T>& dy) {
                    const auto& av = tp.value(a);
                    const auto& bv = tp.value(b);
                    Tensor<T>* da = tp.requires_grad(a) ? &tp.grad_buffer(a) : nullptr;
                    Tensor<T>* db = tp.requires_grad(b) ? &tp.grad_buffer(b) : nullptr;
                    for (std::size_t i = 0; i < av.size(); ++i) {
                      T d = av[i] - bv[i];
                      T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                      T g = dy[0] * (sign + T(2) * d) / n;
                      if (da) (*da)[i] += g;
                      if (db) (*db)[i] -= g;
                    }
                  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.shape() != bv.shape()) throw ShapeError("add: shape mismatch");
  Tensor<T> y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return t.record(std::move(y), any_grad(t, {a, b}),
                  [a, b](Tape<T>& tp, const Tensor<T>& dy) {
                    for (Var v : {a, b}) {
                      if (!tp.requires_grad(v)) continue;
                      auto& d = tp.grad_buffer(v).vec();
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
                    }
                  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T k) {
  Tensor<T> y = t.value(a);
  for (auto& v : y.vec()) v *= k;
  return t.record(std::move(y), t.requires_grad(a),
                  [a, k](Tape<T>& tp, const Tensor<T>& dy) {
                    auto& d = tp.grad_buffer(a).vec();
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * dy[i];
                  });
}

template <typename T>
Var reshape(Tape<T>& t, Var a, Shape shape) {
  const auto& av = t.value(a);
  if (Tensor<T>::count(shape) != av.size()) {
    throw ShapeError("reshape: " + shape_str(av.shape()) + " to " +
                     shape_str(shape));
  }
  return t.record(Tensor<T>(std::move(shape), av.vec()), t.requires_grad(a),
                  [a](Tape<T>& tp, const Tensor<T>& dy) {
                    auto& d = tp.grad_buffer(a).vec();
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
                  });
}

template <typename T>
Var mean_all(Tape<T>& t, Var a) {
  const auto& av = t.value(a);
  long double acc = 0;
  for (T v : av.vec()) acc += v;
  const auto n = static_cast<T>(av.size());
  return t.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(acc / av.size())}),
                  t.requires_grad(a),
                  [a, n](Tape<T>& tp, const Tensor<T>& dy) {
                    auto& d = tp.grad_buffer(a).vec();
                    for (auto& v : d) v += dy[0] / n;
                  });
}

namespace {

template <typename T>
Var log_map(Tape<T>& t, Var p, T eps, bool complement) {
  Tensor<T> y = t.value(p);
  for (auto& v : y.vec()) {
    T c = std::clamp(v, eps, T(1) - eps);
    v = std::log(complement ? T(1) - c : c);
  }
  return t.record(std::move(y), t.requires_grad(p),
                  [p, eps, complement](Tape<T>& tp, const Tensor<T>& dy) {
                    const auto& pv = tp.value(p).vec();
                    auto& d = tp.grad_buffer(p).vec();
                    for (std::size_t i = 0; i < d.size(); ++i) {
                      if (pv[i] < eps || pv[i] > T(1) - eps) continue;
                      d[i] += complement ? -dy[i] / (T(1) - pv[i]) : dy[i] / pv[i];
                    }
                  });
}

}  // namespace

template <typename T>
Var log_clamped(Tape<T>& t, Var p, T eps) {
  return log_map(t, p, eps, false);
}

template <typename T>
Var log1m_clamped(Tape<T>& t, Var p, T eps) {
  return log_map(t, p, eps, true);
}

#define REVERBSWAP_INSTANTIATE_OPS(T)                                         \
  template Var conv2d(Tape<T>&, Var, Var, Var, const ConvGeometry&);          \
  template Var conv_transpose2d(Tape<T>&, Var, Var, Var, const ConvGeometry&, \
                                int, int);                                    \
  template Var relu(Tape<T>&, Var);                                           \
  template Var sigmoid(Tape<T>&, Var);                                        \
  template Var global_avg_pool(Tape<T>&, Var);                                \
  template Var linear(Tape<T>&, Var, Var, Var);                               \
  template Var channel_scale(Tape<T>&, Var, Var);                             \
  template Var concat_channels(Tape<T>&, Var, Var);                           \
  template Var slice_channels(Tape<T>&, Var, int, int);                       \
  template Var adaptive_max_pool(Tape<T>&, Var, int, int);                    \
  template Var l1_l2_distance(Tape<T>&, Var, Var);                            \
  template Var add(Tape<T>&, Var, Var);                                       \
  template Var scale(Tape<T>&, Var, T);                                       \
  template Var reshape(Tape<T>&, Var, Shape);                                 \
  template Var mean_all(Tape<T>&, Var);                                       \
  template Var log_clamped(Tape<T>&, Var, T);                                 \
  template Var log1m_clamped(Tape<T>&, Var, T);

REVERBSWAP_INSTANTIATE_OPS(float)
REVERBSWAP_INSTANTIATE_OPS(double)

#undef REVERBSWAP_INSTANTIATE_OPS

}  // namespace ops

}  // namespace reverbswap
