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

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "audioret/corpus.hpp"
#include "audioret/error.hpp"
#include "audioret/json_fields.hpp"
#include "audioret/layers.hpp"
#include "audioret/rng.hpp"
#include "audioret/tensor.hpp"

namespace audioret {

enum class LayerKind {
  dense,
  conv1d,
  gru,
  lstm,
  relu,
  tanh_act,
  sigmoid_act,
  max_pool_time,
  mean_pool_time,
  projection,
};
enum class RecurrentCell { gru, lstm };
enum class TextMode { word_average, sentence_table };
enum class LossKind { triplet, bce_expdist };
enum class Scorer { dot, exp_neg_euclid };

namespace detail {

template <typename Enum, std::size_t N>
struct EnumNames {
  std::array<std::pair<Enum, std::string_view>, N> table;
  std::string_view what;

  std::string_view name(Enum e) const {
    for (const auto& [v, n] : table) {
      if (v == e) return n;
    }
    return "?";
  }
  Enum parse(std::string_view s) const {
    for (const auto& [v, n] : table) {
      if (n == s) return v;
    }
    fail("unknown ", what, " '", s, "'");
  }
};

inline constexpr EnumNames<LayerKind, 10> kLayerKinds{
    {{{LayerKind::dense, "dense"},
      {LayerKind::conv1d, "conv1d"},
      {LayerKind::gru, "gru"},
      {LayerKind::lstm, "lstm"},
      {LayerKind::relu, "relu"},
      {LayerKind::tanh_act, "tanh_act"},
      {LayerKind::sigmoid_act, "sigmoid_act"},
      {LayerKind::max_pool_time, "max_pool_time"},
      {LayerKind::mean_pool_time, "mean_pool_time"},
      {LayerKind::projection, "projection"}}},
    "layer kind"};
inline constexpr EnumNames<RecurrentCell, 2> kCells{
    {{{RecurrentCell::gru, "gru"}, {RecurrentCell::lstm, "lstm"}}},
    "recurrent cell"};
inline constexpr EnumNames<TextMode, 2> kTextModes{
    {{{TextMode::word_average, "word_average"},
      {TextMode::sentence_table, "sentence_table"}}},
    "text mode"};
inline constexpr EnumNames<LossKind, 2> kLosses{
    {{{LossKind::triplet, "triplet"}, {LossKind::bce_expdist, "bce_expdist"}}},
    "loss"};
inline constexpr EnumNames<Scorer, 2> kScorers{
    {{{Scorer::dot, "dot"}, {Scorer::exp_neg_euclid, "exp_neg_euclid"}}},
    "scorer"};
inline constexpr EnumNames<nn::Activation, 2> kProjectionActs{
    {{{nn::Activation::relu, "relu"}, {nn::Activation::identity, "identity"}}},
    "projection activation"};

}  // namespace detail

inline std::string_view to_string(LayerKind k) { return detail::kLayerKinds.name(k); }
inline std::string_view to_string(RecurrentCell k) { return detail::kCells.name(k); }
inline std::string_view to_string(TextMode k) { return detail::kTextModes.name(k); }
inline std::string_view to_string(LossKind k) { return detail::kLosses.name(k); }
inline std::string_view to_string(Scorer k) { return detail::kScorers.name(k); }

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t kernel_width = 0;
  std::size_t pool_stride = 0;  // 0 pools the whole sequence
  std::size_t hidden_dim = 0;

  bool operator==(const LayerSpec&) const = default;

  static LayerSpec dense(std::size_t in, std::size_t out) {
    return {LayerKind::dense, in, out, 0, 0, 0};
  }
  static LayerSpec projection(std::size_t in, std::size_t out) {
    return {LayerKind::projection, in, out, 0, 0, 0};
  }
  static LayerSpec conv1d(std::size_t in, std::size_t out, std::size_t k) {
    return {LayerKind::conv1d, in, out, k, 0, 0};
  }
  static LayerSpec recurrent(RecurrentCell cell, std::size_t in,
                             std::size_t hidden) {
    return {cell == RecurrentCell::gru ? LayerKind::gru : LayerKind::lstm,
            in, 0, 0, 0, hidden};
  }
  static LayerSpec act(LayerKind kind) { return {kind, 0, 0, 0, 0, 0}; }
  static LayerSpec max_pool(std::size_t stride) {
    return {LayerKind::max_pool_time, 0, 0, 0, stride, 0};
  }
  static LayerSpec mean_pool(std::size_t stride = 0) {
    return {LayerKind::mean_pool_time, 0, 0, 0, stride, 0};
  }
};

struct ProjectionSpec {
  std::size_t out_dim = 1024;
  nn::Activation activation = nn::Activation::relu;  // relu or identity

  bool operator==(const ProjectionSpec&) const = default;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

struct ModelConfig {
  std::size_t input_dim = 64;
  std::vector<LayerSpec> audio_tower;
  RecurrentCell recurrent_cell = RecurrentCell::gru;
  std::size_t embed_dim = 300;
  std::size_t text_dim = 0;  // 0: same as embed_dim
  std::optional<ProjectionSpec> projection;
  TextMode text_mode = TextMode::word_average;
  LossKind loss = LossKind::triplet;
  Scorer scorer = Scorer::dot;
  double margin = 1.0;
  std::uint64_t seed = 0;
  AdamHyper optimizer;

  bool operator==(const ModelConfig&) const = default;

  std::size_t text_input_dim() const { return text_dim ? text_dim : embed_dim; }
  std::size_t score_dim() const {
    return projection ? projection->out_dim : embed_dim;
  }
  // The text tower is trainable only through the shared projection, and only
  // for averaged word vectors; sentence vectors are used verbatim.
  bool has_text_projection() const {
    return projection.has_value() && text_mode == TextMode::word_average;
  }

  void validate() const {
    if (input_dim == 0) fail("model.input_dim must be positive");
    if (audio_tower.empty()) fail("model.audio_tower is empty");
    std::size_t width = input_dim;
    bool collapsed = false;
    for (std::size_t i = 0; i < audio_tower.size(); ++i) {
      const auto& l = audio_tower[i];
      const auto where = detail::concat("model.audio_tower[", i, "] (",
                                        to_string(l.kind), ")");
      switch (l.kind) {
        case LayerKind::dense:
        case LayerKind::projection:
        case LayerKind::conv1d:
          if (l.in_dim != width) {
            fail(where, ": in_dim ", l.in_dim, " but incoming width is ", width);
          }
          if (l.out_dim == 0) fail(where, ": out_dim must be positive");
          if (l.kind == LayerKind::conv1d &&
              (l.kernel_width == 0 || l.kernel_width % 2 == 0)) {
            fail(where, ": kernel_width must be odd, got ", l.kernel_width);
          }
          width = l.out_dim;
          break;
        case LayerKind::gru:
        case LayerKind::lstm: {
          const auto cell = l.kind == LayerKind::gru ? RecurrentCell::gru
                                                     : RecurrentCell::lstm;
          if (cell != recurrent_cell) {
            fail(where, ": does not match recurrent_cell '",
                 to_string(recurrent_cell), "'");
          }
          if (l.in_dim != width) {
            fail(where, ": in_dim ", l.in_dim, " but incoming width is ", width);
          }
          if (l.hidden_dim == 0) fail(where, ": hidden_dim must be positive");
          width = l.hidden_dim;
          break;
        }
        case LayerKind::max_pool_time:
        case LayerKind::mean_pool_time:
          if (l.pool_stride == 0) collapsed = true;
          break;
        case LayerKind::relu:
        case LayerKind::tanh_act:
        case LayerKind::sigmoid_act:
          break;
      }
    }
    if (!collapsed) {
      fail("model.audio_tower must contain a whole-sequence pooling layer "
           "(pool_stride 0)");
    }
    if (width != embed_dim) {
      fail("model.audio_tower output width ", width, " != embed_dim ",
           embed_dim);
    }
    if (projection) {
      if (projection->out_dim == 0) fail("model.projection.out_dim must be positive");
      if (projection->activation != nn::Activation::relu &&
          projection->activation != nn::Activation::identity) {
        fail("model.projection.activation must be relu or identity");
      }
    }
    if (text_mode == TextMode::sentence_table || !projection) {
      if (score_dim() != text_input_dim()) {
        fail("audio scoring dimension ", score_dim(),
             " != text embedding dimension ", text_input_dim());
      }
    }
    if (!(margin > 0)) fail("model.margin must be positive");
    if (!(optimizer.lr > 0)) fail("model.optimizer.lr must be positive");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1) ||
        !(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
      fail("model.optimizer betas must lie in [0, 1)");
    }
    if (!(optimizer.eps > 0)) fail("model.optimizer.eps must be positive");
  }
};

// Two conv blocks (k=3, same padding, ReLU, max-pool stride 2), one
// recurrent layer of width embed_dim, then mean over time.
inline std::vector<LayerSpec> default_audio_tower(RecurrentCell cell,
                                                  std::size_t input_dim,
                                                  std::size_t embed_dim,
                                                  std::size_t conv_channels = 64) {
  return {
      LayerSpec::conv1d(input_dim, conv_channels, 3),
      LayerSpec::act(LayerKind::relu),
      LayerSpec::max_pool(2),
      LayerSpec::conv1d(conv_channels, conv_channels, 3),
      LayerSpec::act(LayerKind::relu),
      LayerSpec::max_pool(2),
      LayerSpec::recurrent(cell, conv_channels, embed_dim),
      LayerSpec::mean_pool(0),
  };
}

inline ModelConfig default_model_config(RecurrentCell cell = RecurrentCell::gru,
                                        std::size_t input_dim = 64,
                                        std::size_t embed_dim = 300,
                                        std::size_t conv_channels = 64) {
  ModelConfig c;
  c.input_dim = input_dim;
  c.recurrent_cell = cell;
  c.embed_dim = embed_dim;
  c.audio_tower = default_audio_tower(cell, input_dim, embed_dim, conv_channels);
  return c;
}

// ---------------------------------------------------------------------------
// JSON form of ModelConfig.

inline Json to_json(const LayerSpec& l) {
  Json j;
  j["kind"] = std::string(to_string(l.kind));
  switch (l.kind) {
    case LayerKind::dense:
    case LayerKind::projection:
      j["in_dim"] = l.in_dim;
      j["out_dim"] = l.out_dim;
      break;
    case LayerKind::conv1d:
      j["in_dim"] = l.in_dim;
      j["out_dim"] = l.out_dim;
      j["kernel_width"] = l.kernel_width;
      break;
    case LayerKind::gru:
    case LayerKind::lstm:
      j["in_dim"] = l.in_dim;
      j["hidden_dim"] = l.hidden_dim;
      break;
    case LayerKind::max_pool_time:
    case LayerKind::mean_pool_time:
      j["pool_stride"] = l.pool_stride;
      break;
    default:
      break;
  }
  return j;
}

inline LayerSpec layer_spec_from_json(const Json& j, const std::string& path) {
  JsonFields f(j, path);
  LayerSpec l;
  l.kind = detail::kLayerKinds.parse(f.require<std::string>("kind"));
  l.in_dim = f.get<std::size_t>("in_dim", 0);
  l.out_dim = f.get<std::size_t>("out_dim", 0);
  l.kernel_width = f.get<std::size_t>("kernel_width", 0);
  l.pool_stride = f.get<std::size_t>("pool_stride", 0);
  l.hidden_dim = f.get<std::size_t>("hidden_dim", 0);
  f.finish();
  return l;
}

inline Json to_json(const ModelConfig& c) {
  Json j;
  j["input_dim"] = c.input_dim;
  j["audio_tower"] = Json::array();
  for (const auto& l : c.audio_tower) j["audio_tower"].push_back(to_json(l));
  j["recurrent_cell"] = std::string(to_string(c.recurrent_cell));
  j["embed_dim"] = c.embed_dim;
  j["text_dim"] = c.text_input_dim();
  if (c.projection) {
    j["projection"] = {
        {"out_dim", c.projection->out_dim},
        {"activation",
         std::string(detail::kProjectionActs.name(c.projection->activation))}};
  } else {
    j["projection"] = nullptr;
  }
  j["text_mode"] = std::string(to_string(c.text_mode));
  j["loss"] = std::string(to_string(c.loss));
  j["scorer"] = std::string(to_string(c.scorer));
  j["margin"] = c.margin;
  j["seed"] = c.seed;
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps}};
  return j;
}

// When "audio_tower" is omitted the default tower is generated from
// recurrent_cell, input_dim, embed_dim and the optional "conv_channels".
inline ModelConfig model_config_from_json(const Json& j,
                                          const std::string& path = "model") {
  JsonFields f(j, path);
  ModelConfig c;
  c.input_dim = f.get<std::size_t>("input_dim", c.input_dim);
  c.recurrent_cell = detail::kCells.parse(
      f.get<std::string>("recurrent_cell", std::string(to_string(c.recurrent_cell))));
  c.embed_dim = f.get<std::size_t>("embed_dim", c.embed_dim);
  c.text_dim = f.get<std::size_t>("text_dim", 0);
  if (const Json* tower = f.child("audio_tower")) {
    if (f.has("conv_channels")) {
      fail(f.path_of("conv_channels"), ": only valid without audio_tower");
    }
    if (!tower->is_array()) fail(f.path_of("audio_tower"), ": expected an array");
    for (std::size_t i = 0; i < tower->size(); ++i) {
      c.audio_tower.push_back(layer_spec_from_json(
          (*tower)[i], detail::concat(f.path_of("audio_tower"), "[", i, "]")));
    }
  } else {
    const auto channels = f.get<std::size_t>("conv_channels", 64);
    c.audio_tower = default_audio_tower(c.recurrent_cell, c.input_dim,
                                        c.embed_dim, channels);
  }
  if (const Json* proj = f.child("projection")) {
    JsonFields p(*proj, f.path_of("projection"));
    ProjectionSpec spec;
    spec.out_dim = p.get<std::size_t>("out_dim", spec.out_dim);
    spec.activation = detail::kProjectionActs.parse(
        p.get<std::string>("activation", "relu"));
    p.finish();
    c.projection = spec;
  }
  c.text_mode = detail::kTextModes.parse(
      f.get<std::string>("text_mode", std::string(to_string(c.text_mode))));
  c.loss = detail::kLosses.parse(
      f.get<std::string>("loss", std::string(to_string(c.loss))));
  const Scorer default_scorer =
      c.loss == LossKind::bce_expdist ? Scorer::exp_neg_euclid : Scorer::dot;
  c.scorer = detail::kScorers.parse(
      f.get<std::string>("scorer", std::string(to_string(default_scorer))));
  c.margin = f.get<double>("margin", c.margin);
  c.seed = f.get<std::uint64_t>("seed", c.seed);
  if (const Json* opt = f.child("optimizer")) {
    JsonFields o(*opt, f.path_of("optimizer"));
    c.optimizer.lr = o.get<double>("lr", c.optimizer.lr);
    c.optimizer.beta1 = o.get<double>("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.get<double>("beta2", c.optimizer.beta2);
    c.optimizer.eps = o.get<double>("eps", c.optimizer.eps);
    o.finish();
  }
  f.finish();
  if (c.text_dim == c.embed_dim) c.text_dim = 0;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Layer stacks over T x C activations.

template <typename Real>
class LayerStack {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  struct LayerTape {
    Matrix<Real> input;
    Matrix<Real> output;
    nn::PoolCache pool;
    std::vector<nn::GruStepCache<Real>> gru;
    std::vector<nn::LstmStepCache<Real>> lstm;
  };
  using Tape = std::vector<LayerTape>;

  void add(ParamSet<Real>& params, const std::string& prefix,
           const LayerSpec& spec) {
    Planned p{spec};
    const auto name = detail::concat(prefix, ".", layers_.size(), ".",
                                     to_string(spec.kind));
    switch (spec.kind) {
      case LayerKind::dense:
      case LayerKind::projection:
        p.w = params.add(name + ".weight", {spec.out_dim, spec.in_dim},
                         {spec.in_dim, spec.out_dim, false});
        p.b = params.add(name + ".bias", {spec.out_dim}, {0, 0, true});
        break;
      case LayerKind::conv1d:
        p.w = params.add(name + ".weight",
                         {spec.out_dim, spec.in_dim, spec.kernel_width},
                         {spec.in_dim * spec.kernel_width,
                          spec.out_dim * spec.kernel_width, false});
        p.b = params.add(name + ".bias", {spec.out_dim}, {0, 0, true});
        break;
      case LayerKind::gru:
      case LayerKind::lstm: {
        const std::size_t gates = spec.kind == LayerKind::gru ? 3 : 4;
        const std::size_t H = spec.hidden_dim;
        p.w = params.add(name + ".W", {gates * H, spec.in_dim},
                         {spec.in_dim, H, false});
        p.u = params.add(name + ".U", {gates * H, H}, {H, H, false});
        p.b = params.add(name + ".b", {gates * H}, {0, 0, true});
        break;
      }
      default:
        break;
    }
    layers_.push_back(p);
  }

  bool empty() const { return layers_.empty(); }

  Matrix<Real> forward(const ParamSet<Real>& params, Matrix<Real> x,
                       Tape* tape) const {
    if (tape) tape->assign(layers_.size(), {});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      LayerTape* lt = tape ? &(*tape)[i] : nullptr;
      Matrix<Real> y;
      switch (l.spec.kind) {
        case LayerKind::dense:
        case LayerKind::projection: {
          if (x.cols != l.spec.in_dim) fail("dense: input width mismatch");
          y = Matrix<Real>(x.rows, l.spec.out_dim);
          for (std::size_t t = 0; t < x.rows; ++t) {
            nn::dense_forward<Real>(x.row(t), params[l.w].data(),
                                    params[l.b].data(), y.row(t));
          }
          if (l.spec.kind == LayerKind::projection) {
            for (auto& v : y.data) v = nn::activate(v, nn::Activation::relu);
          }
          break;
        }
        case LayerKind::conv1d:
          y = nn::conv1d_forward<Real>(x, params[l.w].data(), params[l.b].data(),
                                       l.spec.out_dim, l.spec.kernel_width);
          break;
        case LayerKind::gru:
          y = nn::gru_sequence<Real>(x, weights(params, l), lt ? &lt->gru : nullptr);
          break;
        case LayerKind::lstm:
          y = nn::lstm_sequence<Real>(x, weights(params, l), lt ? &lt->lstm : nullptr);
          break;
        case LayerKind::relu:
        case LayerKind::tanh_act:
        case LayerKind::sigmoid_act:
          y = x;
          for (auto& v : y.data) v = nn::activate(v, act_of(l.spec.kind));
          break;
        case LayerKind::max_pool_time:
        case LayerKind::mean_pool_time:
          y = nn::pool_time<Real>(x, pool_of(l.spec.kind), l.spec.pool_stride,
                                  lt ? &lt->pool : nullptr);
          break;
      }
      if (lt) {
        lt->input = std::move(x);
        lt->output = y;
      }
      x = std::move(y);
    }
    return x;
  }

  // Accumulates parameter gradients into params[i].grad() and returns the
  // gradient with respect to the stack input.
  Matrix<Real> backward(ParamSet<Real>& params, const Tape& tape,
                        Matrix<Real> dy) const {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const auto& l = layers_[i];
      const auto& lt = tape[i];
      Matrix<Real> dx(lt.input.rows, lt.input.cols);
      switch (l.spec.kind) {
        case LayerKind::dense:
        case LayerKind::projection: {
          if (l.spec.kind == LayerKind::projection) {
            for (std::size_t k = 0; k < dy.data.size(); ++k) {
              dy.data[k] *= nn::activation_slope(lt.output.data[k],
                                                 nn::Activation::relu);
            }
          }
          auto dW = params[l.w].grad();
          auto db = params[l.b].grad();
          for (std::size_t t = 0; t < lt.input.rows; ++t) {
            nn::dense_backward<Real>(lt.input.row(t), params[l.w].data(),
                                     dy.row(t), dW, db, dx.row(t));
          }
          break;
        }
        case LayerKind::conv1d:
          nn::conv1d_backward<Real>(lt.input, params[l.w].data(), dy,
                                    l.spec.kernel_width, params[l.w].grad(),
                                    params[l.b].grad(), &dx);
          break;
        case LayerKind::gru: {
          auto g = grads(params, l);
          nn::gru_sequence_backward<Real>(lt.gru, weights(params, l), dy, g, &dx);
          break;
        }
        case LayerKind::lstm: {
          auto g = grads(params, l);
          nn::lstm_sequence_backward<Real>(lt.lstm, weights(params, l), dy, g, &dx);
          break;
        }
        case LayerKind::relu:
        case LayerKind::tanh_act:
        case LayerKind::sigmoid_act:
          nn::activation_backward<Real>(lt.output.data, dy.data,
                                        act_of(l.spec.kind), dx.data);
          break;
        case LayerKind::max_pool_time:
        case LayerKind::mean_pool_time:
          nn::pool_time_backward<Real>(dy, pool_of(l.spec.kind), lt.pool, dx);
          break;
      }
      dy = std::move(dx);
    }
    return dy;
  }

 private:
  struct Planned {
    LayerSpec spec;
    std::size_t w = kNone;
    std::size_t u = kNone;
    std::size_t b = kNone;
  };

  static nn::Activation act_of(LayerKind k) {
    switch (k) {
      case LayerKind::tanh_act: return nn::Activation::tanh;
      case LayerKind::sigmoid_act: return nn::Activation::sigmoid;
      default: return nn::Activation::relu;
    }
  }
  static nn::PoolKind pool_of(LayerKind k) {
    return k == LayerKind::max_pool_time ? nn::PoolKind::max : nn::PoolKind::mean;
  }

  static nn::RecurrentWeights<Real> weights(const ParamSet<Real>& params,
                                            const Planned& l) {
    return {params[l.w].data(), params[l.u].data(), params[l.b].data(),
            l.spec.in_dim, l.spec.hidden_dim};
  }
  static nn::RecurrentGrads<Real> grads(ParamSet<Real>& params, const Planned& l) {
    return {params[l.w].grad(), params[l.u].grad(), params[l.b].grad()};
  }

  std::vector<Planned> layers_;
};

// ---------------------------------------------------------------------------
// Initialization: Xavier-uniform weights drawn in parameter order, row-major,
// from one SplitMix64 stream; biases zero.

template <typename Real>
void init_params(ParamSet<Real>& params, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].data();
    const auto& info = params.info(i);
    if (info.is_bias || info.fan_in + info.fan_out == 0) {
      std::fill(data.begin(), data.end(), Real(0));
      continue;
    }
    const double bound =
        std::sqrt(6.0 / static_cast<double>(info.fan_in + info.fan_out));
    for (auto& v : data) {
      v = static_cast<Real>((2.0 * rng.uniform01() - 1.0) * bound);
    }
  }
}

// ---------------------------------------------------------------------------
// The two-tower model: trainable audio tower (+ optional shared projection)
// and fixed text embeddings (+ optional trainable projection).

template <typename Real>
class CrossModalModel {
 public:
  struct AudioTape {
    typename LayerStack<Real>::Tape tower;
    typename LayerStack<Real>::Tape projection;
  };
  using TextTape = typename LayerStack<Real>::Tape;

  explicit CrossModalModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    for (const auto& spec : config_.audio_tower) tower_.add(params_, "audio", spec);
    if (config_.projection) {
      audio_proj_.add(params_, "audio_proj",
                      shared_projection_spec(config_.embed_dim));
      if (config_.has_text_projection()) {
        text_proj_.add(params_, "text_proj",
                       shared_projection_spec(config_.text_input_dim()));
      }
    }
  }

  static CrossModalModel initialized(ModelConfig config, std::uint64_t seed) {
    CrossModalModel m(std::move(config));
    init_params(m.params_, seed);
    return m;
  }
  static CrossModalModel initialized(ModelConfig config) {
    const auto seed = config.seed;
    return initialized(std::move(config), seed);
  }

  const ModelConfig& config() const { return config_; }
  ParamSet<Real>& params() { return params_; }
  const ParamSet<Real>& params() const { return params_; }

  // Replaces parameter values; names and shapes must match this config.
  void set_params(const ParamSet<Real>& other) {
    if (other.size() != params_.size()) {
      fail("parameter count ", other.size(), " does not match model (",
           params_.size(), ")");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (other.name(i) != params_.name(i) ||
          other[i].shape() != params_[i].shape()) {
        fail("parameter ", i, " '", other.name(i), "' ",
             shape_string(other[i].shape()), " does not match expected '",
             params_.name(i), "' ", shape_string(params_[i].shape()));
      }
      auto src = other[i].data();
      std::copy(src.begin(), src.end(), params_[i].data().begin());
    }
  }

  std::vector<Real> encode_audio(const FeatureSequence& features,
                                 AudioTape* tape = nullptr) const {
    if (features.rows == 0) fail("encode_audio: empty sequence");
    if (features.cols != config_.input_dim) {
      fail("encode_audio: feature dimension ", features.cols,
           " != model input_dim ", config_.input_dim, " (",
           features.source_file, ")");
    }
    Matrix<Real> x(features.rows, features.cols);
    for (std::size_t i = 0; i < features.frames.size(); ++i) {
      x.data[i] = static_cast<Real>(features.frames[i]);
    }
    return encode_audio_matrix(std::move(x), tape);
  }

  std::vector<Real> encode_audio_matrix(Matrix<Real> x,
                                        AudioTape* tape = nullptr) const {
    auto y = tower_.forward(params_, std::move(x), tape ? &tape->tower : nullptr);
    if (y.rows != 1) fail("encode_audio: tower did not collapse time");
    if (!audio_proj_.empty()) {
      y = audio_proj_.forward(params_, std::move(y),
                              tape ? &tape->projection : nullptr);
    }
    return std::move(y.data);
  }

  // Returns dL/d(input features) as a side product (used by gradient checks).
  Matrix<Real> backward_audio(const AudioTape& tape,
                              std::span<const Real> d_embedding) {
    Matrix<Real> dy(1, d_embedding.size());
    std::copy(d_embedding.begin(), d_embedding.end(), dy.data.begin());
    if (!audio_proj_.empty()) dy = audio_proj_.backward(params_, tape.projection, std::move(dy));
    return tower_.backward(params_, tape.tower, std::move(dy));
  }

  std::vector<Real> project_text(std::span<const Real> base,
                                 TextTape* tape = nullptr) const {
    if (base.size() != config_.text_input_dim()) {
      fail("text embedding dimension ", base.size(), " != model text_dim ",
           config_.text_input_dim());
    }
    if (text_proj_.empty()) return {base.begin(), base.end()};
    Matrix<Real> x(1, base.size());
    std::copy(base.begin(), base.end(), x.data.begin());
    return std::move(text_proj_.forward(params_, std::move(x), tape).data);
  }

  void backward_text(const TextTape& tape, std::span<const Real> d_embedding) {
    if (text_proj_.empty()) return;
    Matrix<Real> dy(1, d_embedding.size());
    std::copy(d_embedding.begin(), d_embedding.end(), dy.data.begin());
    text_proj_.backward(params_, tape, std::move(dy));
  }

 private:
  LayerSpec shared_projection_spec(std::size_t in) const {
    const auto out = config_.projection->out_dim;
    return config_.projection->activation == nn::Activation::relu
               ? LayerSpec::projection(in, out)
               : LayerSpec::dense(in, out);
  }

  ModelConfig config_;
  ParamSet<Real> params_;
  LayerStack<Real> tower_;
  LayerStack<Real> audio_proj_;
  LayerStack<Real> text_proj_;
};

// Affine map then ReLU, as used by the shared projection.
template <typename Real>
std::vector<Real> shared_projection(std::span<const Real> e, const Tensor<Real>& W,
                                    const Tensor<Real>& b) {
  auto y = nn::dense_forward<Real>(e, W, b);
  for (auto& v : y) v = nn::activate(v, nn::Activation::relu);
  return y;
}

// ---------------------------------------------------------------------------
// Text side inputs.

struct TextTables {
  const EmbeddingTable* words = nullptr;
  const CaptionEmbeddingTable* sentences = nullptr;
};

struct OovStats {
  std::size_t oov_tokens = 0;
  std::size_t all_oov_captions = 0;  // captions embedded as the zero vector
};

// word_average: mean of in-vocabulary token vectors (OOV tokens skipped; all
// OOV gives the zero vector and bumps the warning counter).
// sentence_table: the stored vector, verbatim.
inline std::vector<float> base_text_embedding(const CaptionRecord& record,
                                              TextMode mode,
                                              const TextTables& tables,
                                              OovStats* stats = nullptr) {
  if (mode == TextMode::sentence_table) {
    if (!tables.sentences) fail("sentence_table mode needs caption embeddings");
    const auto* v = tables.sentences->find(record.key());
    if (!v) fail("no caption embedding for '", record.key(), "'");
    return *v;
  }
  if (!tables.words) fail("word_average mode needs word embeddings");
  std::vector<double> acc(tables.words->dim, 0.0);
  std::size_t found = 0;
  for (const auto& tok : record.tokens) {
    const auto* v = tables.words->find(tok);
    if (!v) {
      if (stats) ++stats->oov_tokens;
      continue;
    }
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += (*v)[d];
    ++found;
  }
  std::vector<float> out(acc.size(), 0.0f);
  if (found == 0) {
    if (stats) ++stats->all_oov_captions;
    return out;
  }
  for (std::size_t d = 0; d < acc.size(); ++d) {
    out[d] = static_cast<float>(acc[d] / static_cast<double>(found));
  }
  return out;
}

template <typename Real>
std::vector<Real> embed_text(const CaptionRecord& record,
                             const CrossModalModel<Real>& model,
                             const TextTables& tables, OovStats* stats = nullptr) {
  const auto base =
      base_text_embedding(record, model.config().text_mode, tables, stats);
  const std::vector<Real> as_real(base.begin(), base.end());
  return model.project_text(as_real);
}

// ---------------------------------------------------------------------------
// Checkpoints: "CKPT", u32-LE header length, JSON header, float32-LE payloads
// in header order.

struct Checkpoint {
  ModelConfig config;
  ParamSet<float> params;
  int epoch = 0;
  double best_validation_mAP10 = 0.0;
};

inline constexpr std::string_view kCheckpointMagic = "CKPT";

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  Json header;
  header["format_version"] = 1;
  header["config"] = to_json(ckpt.config);
  header["epoch"] = ckpt.epoch;
  header["best_validation_mAP10"] = ckpt.best_validation_mAP10;
  header["parameters"] = Json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    header["parameters"].push_back(
        {{"name", ckpt.params.name(i)}, {"shape", ckpt.params[i].shape()}});
  }
  const std::string text = header.dump();
  byte_io::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    for (float v : ckpt.params[i].data()) w.f32(v);
  }
  return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes,
                                    const std::string& what) {
  byte_io::Reader r(bytes, what);
  if (r.bytes(4) != kCheckpointMagic) fail(what, ": bad magic");
  const auto header_len = r.u32();
  Json header;
  try {
    header = Json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(what, ": malformed header: ", e.what());
  }
  JsonFields f(header, "");
  if (f.require<int>("format_version") != 1) fail(what, ": unsupported version");
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(f.require<Json>("config"), "config");
  ckpt.epoch = f.require<int>("epoch");
  ckpt.best_validation_mAP10 = f.require<double>("best_validation_mAP10");
  const CrossModalModel<float> layout(ckpt.config);
  const auto params = f.require<Json>("parameters");
  f.finish();
  if (!params.is_array() || params.size() != layout.params().size()) {
    fail(what, ": parameter list does not match the configured model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = params[i].at("name").get<std::string>();
    const auto shape = params[i].at("shape").get<Shape>();
    if (name != layout.params().name(i) || shape != layout.params()[i].shape()) {
      fail(what, ": parameter ", i, " '", name, "' does not match layout '",
           layout.params().name(i), "'");
    }
    const auto idx = ckpt.params.add(name, shape, layout.params().info(i));
    for (auto& v : ckpt.params[idx].data()) v = r.f32();
  }
  if (r.remaining() != 0) fail(what, ": trailing bytes after payload");
  return ckpt;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  byte_io::write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  return decode_checkpoint(byte_io::read_file(path), path.string());
}

inline CrossModalModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  CrossModalModel<float> model(ckpt.config);
  model.set_params(ckpt.params);
  return model;
}

}  // namespace audioret
