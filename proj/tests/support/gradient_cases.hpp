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

// Finite-difference cases for every layer kind. Each builds a random problem
// from `seed`, uses the loss L = sum_i r_i y_i with random r, and returns the
// checker's worst relative error.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "audioret/gradcheck.hpp"
#include "audioret/layers.hpp"
#include "audioret/model.hpp"
#include "audioret/rng.hpp"

namespace gradient_cases {

using audioret::Matrix;
using audioret::SplitMix64;
using Vec = std::vector<double>;

inline Vec rand_vec(std::size_t n, SplitMix64& rng, double scale = 1.0) {
  Vec v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform01() - 1.0);
  return v;
}

inline Matrix<double> rand_mat(std::size_t r, std::size_t c, SplitMix64& rng,
                               double scale = 1.0) {
  Matrix<double> m(r, c);
  m.data = rand_vec(r * c, rng, scale);
  return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double check(const std::function<double()>& loss, std::vector<std::span<double>> coords,
                    const std::vector<Vec>& grads) {
  std::vector<std::span<const double>> analytic(grads.begin(), grads.end());
  return audioret::finite_difference_check(loss, coords, analytic).max_relative_error;
}

inline double dense(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t in = 4, out = 3;
  auto x = rand_vec(in, rng), W = rand_vec(out * in, rng), b = rand_vec(out, rng);
  const auto r = rand_vec(out, rng);
  auto loss = [&] {
    Vec y(out);
    audioret::nn::dense_forward<double>(x, W, b, y);
    return dot(r, y);
  };
  Vec dx(in), dW(out * in), db(out);
  audioret::nn::dense_backward<double>(x, W, r, dW, db, dx);
  return check(loss, {x, W, b}, {dx, dW, db});
}

inline double activation(std::uint64_t seed, audioret::nn::Activation kind) {
  SplitMix64 rng(seed);
  auto x = rand_vec(6, rng, 2.0);
  const auto r = rand_vec(6, rng);
  auto loss = [&] { return dot(r, audioret::nn::activation<double>(x, kind)); };
  const auto y = audioret::nn::activation<double>(x, kind);
  Vec dx(6);
  audioret::nn::activation_backward<double>(y, r, kind, dx);
  return check(loss, {x}, {dx});
}

inline double conv1d(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t T = 5, cin = 3, cout = 2, k = 3;
  auto x = rand_mat(T, cin, rng);
  auto kernels = rand_vec(cout * cin * k, rng), bias = rand_vec(cout, rng);
  const auto r = rand_mat(T, cout, rng);
  auto loss = [&] {
    return dot(r.data, audioret::nn::conv1d_forward<double>(x, kernels, bias, cout, k).data);
  };
  Vec dk(kernels.size()), db(cout);
  Matrix<double> dx(T, cin);
  audioret::nn::conv1d_backward<double>(x, kernels, r, k, dk, db, &dx);
  return check(loss, {x.data, kernels, bias}, {dx.data, dk, db});
}

inline double pool(std::uint64_t seed, audioret::nn::PoolKind kind, std::size_t stride) {
  SplitMix64 rng(seed);
  auto x = rand_mat(7, 3, rng);
  audioret::nn::PoolCache cache;
  const auto y = audioret::nn::pool_time<double>(x, kind, stride, &cache);
  const auto r = rand_mat(y.rows, y.cols, rng);
  auto loss = [&] { return dot(r.data, audioret::nn::pool_time<double>(x, kind, stride).data); };
  Matrix<double> dx(7, 3);
  audioret::nn::pool_time_backward<double>(r, kind, cache, dx);
  return check(loss, {x.data}, {dx.data});
}

inline double gru_step(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t I = 3, H = 4;
  auto x = rand_vec(I, rng), h = rand_vec(H, rng);
  auto W = rand_vec(3 * H * I, rng), U = rand_vec(3 * H * H, rng), b = rand_vec(3 * H, rng);
  const auto r = rand_vec(H, rng);
  auto weights = [&] { return audioret::nn::RecurrentWeights<double>{W, U, b, I, H}; };
  auto loss = [&] { return dot(r, audioret::nn::gru_step<double>(x, h, weights())); };
  audioret::nn::GruStepCache<double> cache;
  audioret::nn::gru_step<double>(x, h, weights(), &cache);
  Vec dx(I), dh(H), dW(W.size()), dU(U.size()), db(b.size());
  audioret::nn::RecurrentGrads<double> g{dW, dU, db};
  audioret::nn::gru_step_backward<double>(cache, weights(), r, g, dx, dh);
  return check(loss, {x, h, W, U, b}, {dx, dh, dW, dU, db});
}

inline double lstm_step(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t I = 3, H = 4;
  auto x = rand_vec(I, rng), h = rand_vec(H, rng), c = rand_vec(H, rng);
  auto W = rand_vec(4 * H * I, rng), U = rand_vec(4 * H * H, rng), b = rand_vec(4 * H, rng);
  const auto rh = rand_vec(H, rng), rc = rand_vec(H, rng);
  auto weights = [&] { return audioret::nn::RecurrentWeights<double>{W, U, b, I, H}; };
  auto loss = [&] {
    const auto [hn, cn] = audioret::nn::lstm_step<double>(x, h, c, weights());
    return dot(rh, hn) + dot(rc, cn);
  };
  audioret::nn::LstmStepCache<double> cache;
  audioret::nn::lstm_step<double>(x, h, c, weights(), &cache);
  Vec dx(I), dh(H), dc(H), dW(W.size()), dU(U.size()), db(b.size());
  audioret::nn::RecurrentGrads<double> g{dW, dU, db};
  audioret::nn::lstm_step_backward<double>(cache, weights(), rh, rc, g, dx, dh, dc);
  return check(loss, {x, h, c, W, U, b}, {dx, dh, dc, dW, dU, db});
}

// A LayerStack of the given specs, checked on parameters and input together.
inline double stack(std::uint64_t seed, const std::vector<audioret::LayerSpec>& specs,
                    std::size_t T, std::size_t in) {
  SplitMix64 rng(seed);
  audioret::ParamSet<double> params;
  audioret::LayerStack<double> s;
  for (const auto& spec : specs) s.add(params, "s", spec);
  audioret::init_params(params, rng.next());
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto& v : params[i].data()) v += 0.1 * (2.0 * rng.uniform01() - 1.0);
  }
  auto x = rand_mat(T, in, rng);
  audioret::LayerStack<double>::Tape tape;
  const auto y = s.forward(params, x, &tape);
  const auto r = rand_mat(y.rows, y.cols, rng);
  params.zero_grad();
  const auto dx = s.backward(params, tape, r);
  auto loss = [&] { return dot(r.data, s.forward(params, x, nullptr).data); };
  std::vector<std::span<double>> coords{x.data};
  std::vector<Vec> grads{dx.data};
  for (std::size_t i = 0; i < params.size(); ++i) {
    coords.push_back(params[i].data());
    auto g = params[i].grad();
    grads.emplace_back(g.begin(), g.end());
  }
  return check(loss, coords, grads);
}

inline double projection(std::uint64_t seed) {
  return stack(seed, {audioret::LayerSpec::projection(5, 7)}, 1, 5);
}

// Whole audio side of the model (tower + shared projection) with random
// seeds for both weights and input.
inline double tower(std::uint64_t seed, audioret::RecurrentCell cell, bool with_projection) {
  using audioret::LayerKind;
  using audioret::LayerSpec;
  SplitMix64 rng(seed);
  audioret::ModelConfig c;
  c.input_dim = 3;
  c.embed_dim = 4;
  c.recurrent_cell = cell;
  c.audio_tower = {LayerSpec::conv1d(3, 4, 3), LayerSpec::act(LayerKind::relu),
                   LayerSpec::max_pool(2),     LayerSpec::conv1d(4, 3, 3),
                   LayerSpec::act(LayerKind::tanh_act), LayerSpec::recurrent(cell, 3, 4),
                   LayerSpec::mean_pool(0)};
  if (with_projection) {
    c.projection = audioret::ProjectionSpec{6, audioret::nn::Activation::relu};
    c.text_dim = 5;
  }
  auto model = audioret::CrossModalModel<double>::initialized(c, rng.next());
  auto x = rand_mat(7, 3, rng);
  typename audioret::CrossModalModel<double>::AudioTape tape;
  const auto y = model.encode_audio_matrix(x, &tape);
  const auto r = rand_vec(y.size(), rng);
  model.params().zero_grad();
  const auto dx = model.backward_audio(tape, r);
  auto loss = [&] { return dot(r, model.encode_audio_matrix(x)); };
  std::vector<std::span<double>> coords{x.data};
  std::vector<Vec> grads{dx.data};
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.name(i).rfind("text_proj", 0) == 0) continue;
    coords.push_back(params[i].data());
    auto g = params[i].grad();
    grads.emplace_back(g.begin(), g.end());
  }
  return check(loss, coords, grads);
}

struct Case {
  std::string name;
  std::function<double(std::uint64_t)> run;
};

inline std::vector<Case> all_cases() {
  using audioret::LayerKind;
  using audioret::LayerSpec;
  using audioret::RecurrentCell;
  using audioret::nn::Activation;
  using audioret::nn::PoolKind;
  return {
      {"dense", dense},
      {"relu", [](std::uint64_t s) { return activation(s, Activation::relu); }},
      {"tanh", [](std::uint64_t s) { return activation(s, Activation::tanh); }},
      {"sigmoid", [](std::uint64_t s) { return activation(s, Activation::sigmoid); }},
      {"conv1d", conv1d},
      {"gru_step", gru_step},
      {"lstm_step", lstm_step},
      {"mean_pool_full", [](std::uint64_t s) { return pool(s, PoolKind::mean, 0); }},
      {"mean_pool_stride3", [](std::uint64_t s) { return pool(s, PoolKind::mean, 3); }},
      {"max_pool_stride2", [](std::uint64_t s) { return pool(s, PoolKind::max, 2); }},
      {"max_pool_full", [](std::uint64_t s) { return pool(s, PoolKind::max, 0); }},
      {"projection", projection},
      {"gru_sequence",
       [](std::uint64_t s) {
         return stack(s, {LayerSpec::recurrent(RecurrentCell::gru, 3, 4)}, 5, 3);
       }},
      {"lstm_sequence",
       [](std::uint64_t s) {
         return stack(s, {LayerSpec::recurrent(RecurrentCell::lstm, 3, 4)}, 5, 3);
       }},
      {"tower_gru", [](std::uint64_t s) { return tower(s, RecurrentCell::gru, false); }},
      {"tower_lstm", [](std::uint64_t s) { return tower(s, RecurrentCell::lstm, false); }},
      {"tower_gru_projection",
       [](std::uint64_t s) { return tower(s, RecurrentCell::gru, true); }},
  };
}

}  // namespace gradient_cases
