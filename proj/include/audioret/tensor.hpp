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
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "audioret/error.hpp"

namespace audioret {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor with an optional gradient buffer of the same shape.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_size(shape_), Real(0)) {}
  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      fail("tensor data length ", data_.size(), " does not match shape ",
           shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty() && grad_.size() == data_.size(); }
  // Allocates the gradient slot on first use.
  std::span<Real> grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), Real(0));
    return grad_;
  }
  std::span<const Real> grad() const { return grad_; }
  void zero_grad() { grad_.assign(data_.size(), Real(0)); }
  void drop_grad() { grad_.clear(); }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
  std::vector<Real> grad_;
};

// Row-major T x C activation matrix. Vectors are 1 x C.
template <typename Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0))
      : rows(r), cols(c), data(r * c, fill) {}

  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Real operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<Real> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Real> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

struct ParamInfo {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool is_bias = false;
};

// Ordered, named parameter tensors. Order is part of the checkpoint format.
template <typename Real>
class ParamSet {
 public:
  std::size_t add(std::string name, Shape shape, ParamInfo info = {}) {
    if (find(name)) fail("duplicate parameter name '", name, "'");
    names_.push_back(std::move(name));
    tensors_.emplace_back(std::move(shape));
    info_.push_back(info);
    return tensors_.size() - 1;
  }

  std::size_t size() const { return tensors_.size(); }
  Tensor<Real>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<Real>& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const ParamInfo& info(std::size_t i) const { return info_[i]; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    return std::nullopt;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (std::size_t i = 0; i < size(); ++i) {
      auto idx = out.add(names_[i], tensors_[i].shape(), info_[i]);
      out[idx] = tensors_[i].template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Real>> tensors_;
  std::vector<ParamInfo> info_;
};

}  // namespace audioret
