// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "metamf/errors.hpp"

namespace metamf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. `grad` is absent until a backward pass or
// zero_grad() materializes it.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  bool requires_grad = false;
  std::optional<std::vector<T>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0})
      : shape(std::move(s)), values(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_size(shape) != values.size())
      throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                       std::to_string(values.size()) + " values");
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::vector<T> v) {
    return Tensor({r, c}, std::move(v));
  }
  static Tensor vector(std::vector<T> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  // A rank-1 tensor is viewed as a single row.
  std::size_t rows() const { return shape.size() <= 1 ? 1 : shape.front(); }
  std::size_t cols() const {
    if (shape.size() <= 1) return shape.empty() ? 1 : shape.front();
    return size() / shape.front();
  }

  T& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return values[r * cols() + c];
  }

  void zero_grad() { grad.emplace(values.size(), T{0}); }

  bool operator==(const Tensor& o) const {
    return shape == o.shape && values == o.values;
  }
};

template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape &&
         (a.values.empty() ||
          std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(T)) == 0);
}

}  // namespace metamf
