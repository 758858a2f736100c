/*
 * Copyright 2026 The audioret Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "audioret/error.hpp"
#include "audioret/tensor.hpp"

// Forward and backward kernels for the layer kinds the audio tower is built
// from. Backward functions accumulate (+=) into every gradient buffer they
// are handed, inputs and parameters alike; callers zero them first. An
// empty input-gradient span means "not needed".
namespace audioret::nn {

enum class Activation { relu, tanh, sigmoid, identity };

template <typename Real>
Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <typename Real>
Real activate(Real x, Activation kind) {
  switch (kind) {
    case Activation::relu: return x > 0 ? x : Real(0);
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::identity: return x;
  }
  return x;
}

// Derivative expressed through the activation output y.
template <typename Real>
Real activation_slope(Real y, Activation kind) {
  switch (kind) {
    case Activation::relu: return y > 0 ? Real(1) : Real(0);
    case Activation::tanh: return Real(1) - y * y;
    case Activation::sigmoid: return y * (Real(1) - y);
    case Activation::identity: return Real(1);
  }
  return Real(1);
}

template <typename Real>
std::vector<Real> activation(std::span<const Real> x, Activation kind) {
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(x[i], kind);
  return y;
}

template <typename Real>
void activation_backward(std::span<const Real> y, std::span<const Real> dy,
                         Activation kind, std::span<Real> dx) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    dx[i] += dy[i] * activation_slope(y[i], kind);
  }
}

// ---------------------------------------------------------------------------
// Dense: y = W x + b, W is [out, in].

template <typename Real>
void dense_forward(std::span<const Real> x, std::span<const Real> W,
                   std::span<const Real> b, std::span<Real> y) {
  const std::size_t in = x.size(), out = y.size();
  if (W.size() != out * in || b.size() != out) {
    fail("dense: shape mismatch (x ", in, ", y ", out, ", W ", W.size(),
         ", b ", b.size(), ")");
  }
  for (std::size_t o = 0; o < out; ++o) {
    Real acc = b[o];
    const Real* w = W.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
    y[o] = acc;
  }
}

template <typename Real>
std::vector<Real> dense_forward(std::span<const Real> x, const Tensor<Real>& W,
                                const Tensor<Real>& b) {
  if (W.shape().size() != 2 || W.shape()[1] != x.size() ||
      b.shape() != Shape{W.shape()[0]}) {
    fail("dense: shape mismatch (x ", x.size(), ", W ", shape_string(W.shape()),
         ", b ", shape_string(b.shape()), ")");
  }
  std::vector<Real> y(W.shape()[0]);
  dense_forward<Real>(x, W.data(), b.data(), y);
  return y;
}

template <typename Real>
void dense_backward(std::span<const Real> x, std::span<const Real> W,
                    std::span<const Real> dy, std::span<Real> dW,
                    std::span<Real> db, std::span<Real> dx) {
  const std::size_t in = x.size(), out = dy.size();
  for (std::size_t o = 0; o < out; ++o) {
    const Real g = dy[o];
    db[o] += g;
    Real* gw = dW.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) gw[i] += g * x[i];
    if (!dx.empty()) {
      const Real* w = W.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += w[i] * g;
    }
  }
}

// ---------------------------------------------------------------------------
// Conv1d along time, "same" zero padding. x is T x C_in, kernels are
// [C_out, C_in, k] with k odd; output is T x C_out.

template <typename Real>
Matrix<Real> conv1d_forward(const Matrix<Real>& x, std::span<const Real> kernels,
                            std::span<const Real> bias, std::size_t out_channels,
                            std::size_t width) {
  const std::size_t in_channels = x.cols;
  if (width % 2 == 0) fail("conv1d: kernel width must be odd, got ", width);
  if (kernels.size() != out_channels * in_channels * width ||
      bias.size() != out_channels) {
    fail("conv1d: shape mismatch (C_in ", in_channels, ", C_out ",
         out_channels, ", k ", width, ", kernels ", kernels.size(), ")");
  }
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  const auto T = static_cast<std::ptrdiff_t>(x.rows);
  Matrix<Real> y(x.rows, out_channels);
  for (std::ptrdiff_t t = 0; t < T; ++t) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      Real acc = bias[o];
      for (std::size_t j = 0; j < width; ++j) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
        if (src < 0 || src >= T) continue;
        const Real* xr = x.data.data() + static_cast<std::size_t>(src) * in_channels;
        const Real* w = kernels.data() + o * in_channels * width + j;
        for (std::size_t i = 0; i < in_channels; ++i) acc += w[i * width] * xr[i];
      }
      y(static_cast<std::size_t>(t), o) = acc;
    }
  }
  return y;
}

template <typename Real>
void conv1d_backward(const Matrix<Real>& x, std::span<const Real> kernels,
                     const Matrix<Real>& dy, std::size_t width,
                     std::span<Real> dkernels, std::span<Real> dbias,
                     Matrix<Real>* dx) {
  const std::size_t in_channels = x.cols, out_channels = dy.cols;
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  const auto T = static_cast<std::ptrdiff_t>(x.rows);
  for (std::ptrdiff_t t = 0; t < T; ++t) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      const Real g = dy(static_cast<std::size_t>(t), o);
      dbias[o] += g;
      for (std::size_t j = 0; j < width; ++j) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
        if (src < 0 || src >= T) continue;
        const auto s = static_cast<std::size_t>(src);
        const std::size_t base = o * in_channels * width + j;
        for (std::size_t i = 0; i < in_channels; ++i) {
          dkernels[base + i * width] += g * x(s, i);
          if (dx) (*dx)(s, i) += kernels[base + i * width] * g;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Pooling over time with non-overlapping windows of `stride` frames. Stride
// 0 pools the whole sequence into a single row. The last window may be
// partial; mean divides by its actual length.

enum class PoolKind { max, mean };

struct PoolCache {
  std::size_t in_rows = 0;
  std::size_t window = 0;
  std::vector<std::size_t> argmax;  // max only: source row per output cell
};

template <typename Real>
Matrix<Real> pool_time(const Matrix<Real>& x, PoolKind kind, std::size_t stride,
                       PoolCache* cache = nullptr) {
  if (x.rows == 0) fail("pool_time: empty sequence");
  const std::size_t window = stride == 0 ? x.rows : stride;
  const std::size_t out_rows = (x.rows + window - 1) / window;
  Matrix<Real> y(out_rows, x.cols);
  std::vector<std::size_t> argmax(kind == PoolKind::max ? out_rows * x.cols : 0);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const std::size_t begin = r * window;
    const std::size_t end = std::min(x.rows, begin + window);
    for (std::size_t c = 0; c < x.cols; ++c) {
      if (kind == PoolKind::max) {
        std::size_t best = begin;
        for (std::size_t t = begin + 1; t < end; ++t) {
          if (x(t, c) > x(best, c)) best = t;
        }
        y(r, c) = x(best, c);
        argmax[r * x.cols + c] = best;
      } else {
        Real acc = 0;
        for (std::size_t t = begin; t < end; ++t) acc += x(t, c);
        y(r, c) = acc / static_cast<Real>(end - begin);
      }
    }
  }
  if (cache) {
    cache->in_rows = x.rows;
    cache->window = window;
    cache->argmax = std::move(argmax);
  }
  return y;
}

template <typename Real>
void pool_time_backward(const Matrix<Real>& dy, PoolKind kind,
                        const PoolCache& cache, Matrix<Real>& dx) {
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const std::size_t begin = r * cache.window;
    const std::size_t end = std::min(cache.in_rows, begin + cache.window);
    for (std::size_t c = 0; c < dy.cols; ++c) {
      if (kind == PoolKind::max) {
        dx(cache.argmax[r * dy.cols + c], c) += dy(r, c);
      } else {
        const Real share = dy(r, c) / static_cast<Real>(end - begin);
        for (std::size_t t = begin; t < end; ++t) dx(t, c) += share;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Recurrent cells. Gate blocks are stacked row-wise in W [G*H, in],
// U [G*H, H] and b [G*H].

template <typename Real>
struct RecurrentWeights {
  std::span<const Real> W, U, b;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

template <typename Real>
struct RecurrentGrads {
  std::span<Real> W, U, b;
};

namespace detail {

template <typename Real>
void check_recurrent(const RecurrentWeights<Real>& w, std::size_t gates,
                     std::size_t x_size, std::size_t h_size, const char* what) {
  const std::size_t G = gates * w.hidden;
  if (w.W.size() != G * w.input || w.U.size() != G * w.hidden ||
      w.b.size() != G || x_size != w.input || h_size != w.hidden) {
    fail(what, ": shape mismatch (x ", x_size, ", h ", h_size, ", input ",
         w.input, ", hidden ", w.hidden, ")");
  }
}

// Row block `gate` of (W x + U h + b).
template <typename Real>
void gate_preactivation(const RecurrentWeights<Real>& w, std::size_t gate,
                        std::span<const Real> x, std::span<const Real> h,
                        std::span<Real> out) {
  const std::size_t H = w.hidden, I = w.input;
  for (std::size_t k = 0; k < H; ++k) {
    const std::size_t row = gate * H + k;
    Real acc = w.b[row];
    const Real* wr = w.W.data() + row * I;
    for (std::size_t i = 0; i < I; ++i) acc += wr[i] * x[i];
    const Real* ur = w.U.data() + row * H;
    for (std::size_t j = 0; j < H; ++j) acc += ur[j] * h[j];
    out[k] = acc;
  }
}

// Backprop of gate block `gate`: da is dL/d(preactivation).
template <typename Real>
void gate_backward(const RecurrentWeights<Real>& w, std::size_t gate,
                   std::span<const Real> x, std::span<const Real> h,
                   std::span<const Real> da, RecurrentGrads<Real>& g,
                   std::span<Real> dx, std::span<Real> dh) {
  const std::size_t H = w.hidden, I = w.input;
  for (std::size_t k = 0; k < H; ++k) {
    const std::size_t row = gate * H + k;
    const Real d = da[k];
    g.b[row] += d;
    Real* gw = g.W.data() + row * I;
    const Real* wr = w.W.data() + row * I;
    for (std::size_t i = 0; i < I; ++i) {
      gw[i] += d * x[i];
      if (!dx.empty()) dx[i] += wr[i] * d;
    }
    Real* gu = g.U.data() + row * H;
    const Real* ur = w.U.data() + row * H;
    for (std::size_t j = 0; j < H; ++j) {
      gu[j] += d * h[j];
      dh[j] += ur[j] * d;
    }
  }
}

}  // namespace detail

// GRU, gate blocks (z, r, candidate):
//   z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br)
//   c = tanh(Wc x + Uc (r*h) + bc),  h' = (1 - z) * h + z * c
template <typename Real>
struct GruStepCache {
  std::vector<Real> x, h, z, r, cand, rh;
};

template <typename Real>
std::vector<Real> gru_step(std::span<const Real> x, std::span<const Real> h,
                           const RecurrentWeights<Real>& w,
                           GruStepCache<Real>* cache = nullptr) {
  detail::check_recurrent(w, 3, x.size(), h.size(), "gru_step");
  const std::size_t H = w.hidden;
  std::vector<Real> z(H), r(H), cand(H), rh(H), out(H);
  detail::gate_preactivation<Real>(w, 0, x, h, z);
  detail::gate_preactivation<Real>(w, 1, x, h, r);
  for (std::size_t k = 0; k < H; ++k) {
    z[k] = sigmoid(z[k]);
    r[k] = sigmoid(r[k]);
    rh[k] = r[k] * h[k];
  }
  detail::gate_preactivation<Real>(w, 2, x, rh, cand);
  for (std::size_t k = 0; k < H; ++k) {
    cand[k] = std::tanh(cand[k]);
    out[k] = (Real(1) - z[k]) * h[k] + z[k] * cand[k];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h.assign(h.begin(), h.end());
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->cand = std::move(cand);
    cache->rh = std::move(rh);
  }
  return out;
}

template <typename Real>
void gru_step_backward(const GruStepCache<Real>& c,
                       const RecurrentWeights<Real>& w,
                       std::span<const Real> dh_next, RecurrentGrads<Real>& g,
                       std::span<Real> dx, std::span<Real> dh_prev) {
  const std::size_t H = w.hidden;
  std::vector<Real> da_z(H), da_r(H), da_c(H), d_rh(H, Real(0));
  for (std::size_t k = 0; k < H; ++k) {
    const Real d = dh_next[k];
    dh_prev[k] += d * (Real(1) - c.z[k]);
    da_z[k] = d * (c.cand[k] - c.h[k]) * c.z[k] * (Real(1) - c.z[k]);
    da_c[k] = d * c.z[k] * (Real(1) - c.cand[k] * c.cand[k]);
  }
  detail::gate_backward<Real>(w, 2, c.x, c.rh, da_c, g, dx, d_rh);
  for (std::size_t k = 0; k < H; ++k) {
    dh_prev[k] += d_rh[k] * c.r[k];
    da_r[k] = d_rh[k] * c.h[k] * c.r[k] * (Real(1) - c.r[k]);
  }
  detail::gate_backward<Real>(w, 0, c.x, c.h, da_z, g, dx, dh_prev);
  detail::gate_backward<Real>(w, 1, c.x, c.h, da_r, g, dx, dh_prev);
}

// LSTM, gate blocks (i, f, g, o):
//   c' = f * c + i * g,  h' = o * tanh(c')
template <typename Real>
struct LstmStepCache {
  std::vector<Real> x, h, c, i, f, g, o, tanh_c;
};

template <typename Real>
std::pair<std::vector<Real>, std::vector<Real>> lstm_step(
    std::span<const Real> x, std::span<const Real> h, std::span<const Real> c,
    const RecurrentWeights<Real>& w, LstmStepCache<Real>* cache = nullptr) {
  detail::check_recurrent(w, 4, x.size(), h.size(), "lstm_step");
  if (c.size() != w.hidden) fail("lstm_step: cell state size mismatch");
  const std::size_t H = w.hidden;
  std::vector<Real> gi(H), gf(H), gg(H), go(H), h_new(H), c_new(H), tc(H);
  detail::gate_preactivation<Real>(w, 0, x, h, gi);
  detail::gate_preactivation<Real>(w, 1, x, h, gf);
  detail::gate_preactivation<Real>(w, 2, x, h, gg);
  detail::gate_preactivation<Real>(w, 3, x, h, go);
  for (std::size_t k = 0; k < H; ++k) {
    gi[k] = sigmoid(gi[k]);
    gf[k] = sigmoid(gf[k]);
    gg[k] = std::tanh(gg[k]);
    go[k] = sigmoid(go[k]);
    c_new[k] = gf[k] * c[k] + gi[k] * gg[k];
    tc[k] = std::tanh(c_new[k]);
    h_new[k] = go[k] * tc[k];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h.assign(h.begin(), h.end());
    cache->c.assign(c.begin(), c.end());
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->tanh_c = std::move(tc);
  }
  return {std::move(h_new), std::move(c_new)};
}

template <typename Real>
void lstm_step_backward(const LstmStepCache<Real>& s,
                        const RecurrentWeights<Real>& w,
                        std::span<const Real> dh_next,
                        std::span<const Real> dc_next, RecurrentGrads<Real>& g,
                        std::span<Real> dx, std::span<Real> dh_prev,
                        std::span<Real> dc_prev) {
  const std::size_t H = w.hidden;
  std::vector<Real> da_i(H), da_f(H), da_g(H), da_o(H);
  for (std::size_t k = 0; k < H; ++k) {
    const Real dh = dh_next[k];
    const Real dc = dc_next[k] + dh * s.o[k] * (Real(1) - s.tanh_c[k] * s.tanh_c[k]);
    da_o[k] = dh * s.tanh_c[k] * s.o[k] * (Real(1) - s.o[k]);
    da_i[k] = dc * s.g[k] * s.i[k] * (Real(1) - s.i[k]);
    da_f[k] = dc * s.c[k] * s.f[k] * (Real(1) - s.f[k]);
    da_g[k] = dc * s.i[k] * (Real(1) - s.g[k] * s.g[k]);
    dc_prev[k] += dc * s.f[k];
  }
  detail::gate_backward<Real>(w, 0, s.x, s.h, da_i, g, dx, dh_prev);
  detail::gate_backward<Real>(w, 1, s.x, s.h, da_f, g, dx, dh_prev);
  detail::gate_backward<Real>(w, 2, s.x, s.h, da_g, g, dx, dh_prev);
  detail::gate_backward<Real>(w, 3, s.x, s.h, da_o, g, dx, dh_prev);
}

// Unidirectional sweeps over a T x input sequence from a zero initial state.
template <typename Real>
Matrix<Real> gru_sequence(const Matrix<Real>& x, const RecurrentWeights<Real>& w,
                          std::vector<GruStepCache<Real>>* caches = nullptr) {
  Matrix<Real> out(x.rows, w.hidden);
  std::vector<Real> h(w.hidden, Real(0));
  if (caches) caches->assign(x.rows, {});
  for (std::size_t t = 0; t < x.rows; ++t) {
    h = gru_step<Real>(x.row(t), h, w, caches ? &(*caches)[t] : nullptr);
    std::copy(h.begin(), h.end(), out.row(t).begin());
  }
  return out;
}

template <typename Real>
void gru_sequence_backward(const std::vector<GruStepCache<Real>>& caches,
                           const RecurrentWeights<Real>& w,
                           const Matrix<Real>& dout, RecurrentGrads<Real>& g,
                           Matrix<Real>* dx) {
  std::vector<Real> dh(w.hidden, Real(0)), dh_prev(w.hidden);
  for (std::size_t t = caches.size(); t-- > 0;) {
    for (std::size_t k = 0; k < w.hidden; ++k) dh[k] += dout(t, k);
    std::fill(dh_prev.begin(), dh_prev.end(), Real(0));
    std::span<Real> dxt = dx ? dx->row(t) : std::span<Real>{};
    gru_step_backward<Real>(caches[t], w, dh, g, dxt, dh_prev);
    std::swap(dh, dh_prev);
  }
}

template <typename Real>
Matrix<Real> lstm_sequence(const Matrix<Real>& x, const RecurrentWeights<Real>& w,
                           std::vector<LstmStepCache<Real>>* caches = nullptr) {
  Matrix<Real> out(x.rows, w.hidden);
  std::vector<Real> h(w.hidden, Real(0)), c(w.hidden, Real(0));
  if (caches) caches->assign(x.rows, {});
  for (std::size_t t = 0; t < x.rows; ++t) {
    auto [h_new, c_new] =
        lstm_step<Real>(x.row(t), h, c, w, caches ? &(*caches)[t] : nullptr);
    h = std::move(h_new);
    c = std::move(c_new);
    std::copy(h.begin(), h.end(), out.row(t).begin());
  }
  return out;
}

template <typename Real>
void lstm_sequence_backward(const std::vector<LstmStepCache<Real>>& caches,
                            const RecurrentWeights<Real>& w,
                            const Matrix<Real>& dout, RecurrentGrads<Real>& g,
                            Matrix<Real>* dx) {
  const std::size_t H = w.hidden;
  std::vector<Real> dh(H, Real(0)), dc(H, Real(0)), dh_prev(H), dc_prev(H);
  for (std::size_t t = caches.size(); t-- > 0;) {
    for (std::size_t k = 0; k < H; ++k) dh[k] += dout(t, k);
    std::fill(dh_prev.begin(), dh_prev.end(), Real(0));
    std::fill(dc_prev.begin(), dc_prev.end(), Real(0));
    std::span<Real> dxt = dx ? dx->row(t) : std::span<Real>{};
    lstm_step_backward<Real>(caches[t], w, dh, dc, g, dxt, dh_prev, dc_prev);
    std::swap(dh, dh_prev);
    std::swap(dc, dc_prev);
  }
}

}  // namespace audioret::nn
