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

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the node's output gradient into its inputs. Leaves
// bound with Tape::leaf() reference a caller-owned Tensor; their gradient is
// accumulated straight into Tensor::grad. Values are stored as T, while all
// reductions (matmul inner products, sums) accumulate in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metamf/errors.hpp"
#include "metamf/tensor.hpp"

namespace metamf::ad {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Shape& shape() const { return tape_->node(id_).shape; }
  std::span<const T> value() const { return tape_->value(id_); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }

  std::size_t rows() const {
    const Shape& s = shape();
    return s.size() <= 1 ? 1 : s.front();
  }
  std::size_t cols() const {
    const Shape& s = shape();
    if (s.size() <= 1) return s.empty() ? 1 : s.front();
    return size() / s.front();
  }

  Tensor<T> to_tensor() const {
    auto v = value();
    return Tensor<T>(shape(), std::vector<T>(v.begin(), v.end()));
  }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Shape shape;
    std::vector<T> owned;
    const std::vector<T>* ref = nullptr;  // leaf or aliasing node
    Tensor<T>* leaf = nullptr;
    bool requires_grad = false;
    std::vector<T> grad;
    Backward backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Binds a caller-owned tensor. The tensor must outlive the tape and must
  // not be mutated while the tape is in use.
  Var<T> leaf(Tensor<T>& t) {
    Node n;
    n.shape = t.shape;
    n.ref = &t.values;
    n.leaf = &t;
    n.requires_grad = t.requires_grad;
    return push(std::move(n));
  }

  // Read-only view of a caller-owned tensor; no gradient is tracked.
  Var<T> view(const Tensor<T>& t) {
    Node n;
    n.shape = t.shape;
    n.ref = &t.values;
    return push(std::move(n));
  }

  Var<T> constant(Tensor<T> t) {
    Node n;
    n.shape = std::move(t.shape);
    n.owned = std::move(t.values);
    return push(std::move(n));
  }

  Var<T> record(Shape shape, std::vector<T> value, bool requires_grad, Backward backward) {
    Node n;
    n.shape = std::move(shape);
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  // Node sharing the value of `src` with no gradient path back to it.
  Var<T> alias_detached(Var<T> src) {
    Node n;
    n.shape = src.shape();
    const Node& s = node(src.id());
    n.ref = s.ref ? s.ref : &s.owned;
    return push(std::move(n));
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::span<const T> value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? std::span<const T>(*n.ref) : std::span<const T>(n.owned);
  }

  bool has_grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.leaf) return n.leaf->grad.has_value();
    return !n.grad.empty();
  }

  // Gradient buffer of a node, zero-initialised on first access. For leaves
  // this is the bound tensor's own grad.
  std::span<T> grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.leaf) {
      if (!n.leaf->grad || n.leaf->grad->size() != n.leaf->values.size())
        n.leaf->zero_grad();
      return *n.leaf->grad;
    }
    const std::size_t sz = value(id).size();
    if (n.grad.size() != sz) n.grad.assign(sz, T{0});
    return n.grad;
  }

  // Reverse sweep from a scalar loss. Every node is visited at most once.
  void backward(Var<T> loss) {
    if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
    if (value(loss.id()).size() != 1)
      throw ContractError("backward: loss must be a scalar, got shape " +
                          shape_string(loss.shape()));
    if (!nodes_[loss.id()].requires_grad) return;
    grad(loss.id())[0] += T{1};
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
    }
  }

 private:
  Var<T> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
};

namespace detail {

template <class T>
void same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

template <class T>
[[noreturn]] void shape_mismatch(const char* op, const Var<T>& a, const Var<T>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                   " and " + shape_string(b.shape()));
}

template <class T>
void require_matrix(const Var<T>& a, const char* op) {
  if (a.shape().size() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_string(a.shape()));
}

}  // namespace detail

// Elementwise a + b, or matrix + row-vector bias when b has cols(a) entries
// and a is a matrix. No other broadcasting.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::same_tape(a, b, "add");
  Tape<T>& tape = a.tape();
  const auto av = a.value();
  const auto bv = b.value();
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t ia = a.id(), ib = b.id();
  if (a.shape() == b.shape()) {
    std::vector<T> out(av.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[k] + bv[k];
    return tape.record(a.shape(), std::move(out), rg, [ia, ib](Tape<T>& t, std::size_t self) {
      auto gy = t.grad(self);
      if (t.node(ia).requires_grad) {
        auto ga = t.grad(ia);
        for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k];
      }
      if (t.node(ib).requires_grad) {
        auto gb = t.grad(ib);
        for (std::size_t k = 0; k < gy.size(); ++k) gb[k] += gy[k];
      }
    });
  }
  const bool row_bias = a.shape().size() == 2 && b.shape().size() <= 2 && b.rows() == 1 &&
                        b.size() == a.cols();
  if (!row_bias) detail::shape_mismatch("add", a, b);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + bv[j];
  return tape.record(a.shape(), std::move(out), rg, [ia, ib, r, c](Tape<T>& t, std::size_t self) {
    auto gy = t.grad(self);
    if (t.node(ia).requires_grad) {
      auto ga = t.grad(ia);
      for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k];
    }
    if (t.node(ib).requires_grad) {
      std::vector<double> acc(c, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) acc[j] += gy[i * c + j];
      auto gb = t.grad(ib);
      for (std::size_t j = 0; j < c; ++j) gb[j] += static_cast<T>(acc[j]);
    }
  });
}

template <class T>
Var<T> subtract(Var<T> a, Var<T> b) {
  detail::same_tape(a, b, "subtract");
  if (a.shape() != b.shape()) detail::shape_mismatch("subtract", a, b);
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[k] - bv[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           if (t.node(ia).requires_grad) {
                             auto ga = t.grad(ia);
                             for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k];
                           }
                           if (t.node(ib).requires_grad) {
                             auto gb = t.grad(ib);
                             for (std::size_t k = 0; k < gy.size(); ++k) gb[k] -= gy[k];
                           }
                         });
}

template <class T>
Var<T> multiply(Var<T> a, Var<T> b) {
  detail::same_tape(a, b, "multiply");
  if (a.shape() != b.shape()) detail::shape_mismatch("multiply", a, b);
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[k] * bv[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           if (t.node(ia).requires_grad) {
                             auto bv = t.value(ib);
                             auto ga = t.grad(ia);
                             for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k] * bv[k];
                           }
                           if (t.node(ib).requires_grad) {
                             auto av = t.value(ia);
                             auto gb = t.grad(ib);
                             for (std::size_t k = 0; k < gy.size(); ++k) gb[k] += gy[k] * av[k];
                           }
                         });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  const auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[k] * s;
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), a.requires_grad(),
                         [ia, s](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           auto ga = t.grad(ia);
                           for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k] * s;
                         });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  const auto av = a.value();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(shape), std::vector<T>(av.begin(), av.end()), a.requires_grad(),
                         [ia](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           auto ga = t.grad(ia);
                           for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k];
                         });
}

// Concatenation along the first axis. Rank-1 inputs give a rank-1 result.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  const Var<T>& first = parts.front();
  const bool flat = first.shape().size() <= 1;
  const std::size_t c = first.cols();
  std::size_t total_rows = 0;
  bool rg = false;
  std::vector<T> out;
  std::vector<std::size_t> ids;
  for (const Var<T>& p : parts) {
    detail::same_tape(first, p, "concat");
    const bool p_flat = p.shape().size() <= 1;
    if (p_flat != flat || (!flat && p.cols() != c)) detail::shape_mismatch("concat", first, p);
    total_rows += flat ? p.size() : p.rows();
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
  }
  Shape shape = flat ? Shape{total_rows} : Shape{total_rows, c};
  return first.tape().record(std::move(shape), std::move(out), rg,
                             [ids](Tape<T>& t, std::size_t self) {
                               auto gy = t.grad(self);
                               std::size_t off = 0;
                               for (std::size_t id : ids) {
                                 const std::size_t n = t.value(id).size();
                                 if (t.node(id).requires_grad) {
                                   auto g = t.grad(id);
                                   for (std::size_t k = 0; k < n; ++k) g[k] += gy[off + k];
                                 }
                                 off += n;
                               }
                             });
}

// Rows [begin, end) along the first axis (elements for rank-1 inputs).
template <class T>
Var<T> slice(Var<T> a, std::size_t begin, std::size_t end) {
  const bool flat = a.shape().size() <= 1;
  const std::size_t extent = flat ? a.size() : a.rows();
  if (begin > end || end > extent)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for shape " + shape_string(a.shape()));
  const std::size_t stride = flat ? 1 : a.cols();
  Shape shape = a.shape();
  if (shape.empty()) shape = {1};
  shape[0] = end - begin;
  const auto av = a.value();
  std::vector<T> out(av.begin() + begin * stride, av.begin() + end * stride);
  const std::size_t ia = a.id();
  const std::size_t off = begin * stride;
  return a.tape().record(std::move(shape), std::move(out), a.requires_grad(),
                         [ia, off](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           auto ga = t.grad(ia);
                           for (std::size_t k = 0; k < gy.size(); ++k) ga[off + k] += gy[k];
                         });
}

template <class T>
Var<T> sum(Var<T> a) {
  double acc = 0.0;
  for (T x : a.value()) acc += x;
  const std::size_t ia = a.id();
  return a.tape().record(Shape{}, {static_cast<T>(acc)}, a.requires_grad(),
                         [ia](Tape<T>& t, std::size_t self) {
                           const T g = t.grad(self)[0];
                           for (T& x : t.grad(ia)) x += g;
                         });
}

template <class T>
Var<T> mean(Var<T> a) {
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  double acc = 0.0;
  for (T x : a.value()) acc += x;
  const double n = static_cast<double>(a.size());
  const std::size_t ia = a.id();
  return a.tape().record(Shape{}, {static_cast<T>(acc / n)}, a.requires_grad(),
                         [ia, n](Tape<T>& t, std::size_t self) {
                           const T g = static_cast<T>(t.grad(self)[0] / n);
                           for (T& x : t.grad(ia)) x += g;
                         });
}

// Mean squared error over all entries; pred and target sizes must agree.
template <class T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
  detail::same_tape(pred, target, "mse_loss");
  if (pred.size() != target.size() || pred.size() == 0) detail::shape_mismatch("mse_loss", pred, target);
  const auto pv = pred.value();
  const auto tv = target.value();
  double acc = 0.0;
  for (std::size_t k = 0; k < pv.size(); ++k) {
    const double d = static_cast<double>(pv[k]) - static_cast<double>(tv[k]);
    acc += d * d;
  }
  const double n = static_cast<double>(pv.size());
  const std::size_t ip = pred.id(), it = target.id();
  return pred.tape().record(
      Shape{}, {static_cast<T>(acc / n)}, pred.requires_grad() || target.requires_grad(),
      [ip, it, n](Tape<T>& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto pv = t.value(ip);
        auto tv = t.value(it);
        std::span<T> gp, gt;
        if (t.node(ip).requires_grad) gp = t.grad(ip);
        if (t.node(it).requires_grad) gt = t.grad(it);
        for (std::size_t k = 0; k < pv.size(); ++k) {
          const double d = 2.0 * g * (static_cast<double>(pv[k]) - static_cast<double>(tv[k])) / n;
          if (!gp.empty()) gp[k] += static_cast<T>(d);
          if (!gt.empty()) gt[k] -= static_cast<T>(d);
        }
      });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    detail::shape_mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<T> out(m * n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<T>(acc[j]);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      Shape{m, n}, std::move(out), a.requires_grad() || b.requires_grad(),
      [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
        auto gy = t.grad(self);
        auto av = t.value(ia);
        auto bv = t.value(ib);
        if (t.node(ia).requires_grad) {
          auto ga = t.grad(ia);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(gy[i * n + j]) * bv[p * n + j];
              ga[i * k + p] += static_cast<T>(acc);
            }
        }
        if (t.node(ib).requires_grad) {
          std::vector<double> acc(k * n, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) acc[p * n + j] += aip * gy[i * n + j];
            }
          auto gb = t.grad(ib);
          for (std::size_t q = 0; q < k * n; ++q) gb[q] += static_cast<T>(acc[q]);
        }
      });
}

template <class T>
Var<T> relu(Var<T> a) {
  const auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[k] > T{0} ? av[k] : T{0};
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), a.requires_grad(),
                         [ia](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           auto av = t.value(ia);
                           auto ga = t.grad(ia);
                           for (std::size_t k = 0; k < gy.size(); ++k)
                             if (av[k] > T{0}) ga[k] += gy[k];
                         });
}

// Forward-transparent, backward-opaque.
template <class T>
Var<T> stop_gradient(Var<T> a) {
  return a.tape().alias_detached(a);
}

// Row-wise softmax (rank-1 input is one row).
template <class T>
Var<T> softmax_rows(Var<T> a) {
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < r; ++i) {
    const T* x = av.data() + i * c;
    const T mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = static_cast<T>(std::exp(static_cast<double>(x[j] - mx)) / z);
  }
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), a.requires_grad(),
                         [ia, r, c](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           auto y = t.value(self);
                           auto ga = t.grad(ia);
                           for (std::size_t i = 0; i < r; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < c; ++j)
                               dot += static_cast<double>(gy[i * c + j]) * y[i * c + j];
                             for (std::size_t j = 0; j < c; ++j)
                               ga[i * c + j] += static_cast<T>(y[i * c + j] * (gy[i * c + j] - dot));
                           }
                         });
}

// out[r] = a[index[r]]; a is viewed as rows x cols.
template <class T>
Var<T> gather_rows(Var<T> a, std::vector<std::size_t> index) {
  const std::size_t nr = a.rows(), c = a.cols();
  const auto av = a.value();
  std::vector<T> out(index.size() * c);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= nr)
      throw ContractError("gather_rows: row " + std::to_string(index[r]) + " out of range for shape " +
                          shape_string(a.shape()));
    std::copy_n(av.begin() + index[r] * c, c, out.begin() + r * c);
  }
  const std::size_t ia = a.id();
  Shape shape{index.size(), c};
  return a.tape().record(std::move(shape), std::move(out), a.requires_grad(),
                         [ia, c, index = std::move(index)](Tape<T>& t, std::size_t self) {
                           auto gy = t.grad(self);
                           auto ga = t.grad(ia);
                           for (std::size_t r = 0; r < index.size(); ++r)
                             for (std::size_t j = 0; j < c; ++j) ga[index[r] * c + j] += gy[r * c + j];
                         });
}

// Per-row matrix-vector product with row-specific matrices.
//
// `mats` holds one flattened (mat_rows x mat_cols) row-major matrix per row;
// x row r is multiplied by mats[owner[r]] (or its transpose).
//   transpose = false: y_r = M x_r,   x is n x mat_cols, y is n x mat_rows
//   transpose = true:  y_r = M^T x_r, x is n x mat_rows, y is n x mat_cols
template <class T>
Var<T> gathered_matvec(Var<T> mats, Var<T> x, std::vector<std::size_t> owner,
                       std::size_t mat_rows, std::size_t mat_cols, bool transpose) {
  detail::same_tape(mats, x, "gathered_matvec");
  const std::size_t in = transpose ? mat_rows : mat_cols;
  const std::size_t outw = transpose ? mat_cols : mat_rows;
  const std::size_t mm = mat_rows * mat_cols;
  if (mats.cols() != mm || x.cols() != in || x.rows() != owner.size())
    detail::shape_mismatch("gathered_matvec", mats, x);
  const auto mv = mats.value();
  const auto xv = x.value();
  const std::size_t n = owner.size();
  std::vector<T> out(n * outw);
  for (std::size_t r = 0; r < n; ++r) {
    if (owner[r] >= mats.rows()) throw ContractError("gathered_matvec: owner index out of range");
    const T* m = mv.data() + owner[r] * mm;
    const T* xr = xv.data() + r * in;
    for (std::size_t o = 0; o < outw; ++o) {
      double acc = 0.0;
      if (transpose) {
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(m[i * mat_cols + o]) * xr[i];
      } else {
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(m[o * mat_cols + i]) * xr[i];
      }
      out[r * outw + o] = static_cast<T>(acc);
    }
  }
  const std::size_t im = mats.id(), ix = x.id();
  return mats.tape().record(
      Shape{n, outw}, std::move(out), mats.requires_grad() || x.requires_grad(),
      [im, ix, mm, in, outw, mat_cols, transpose, owner = std::move(owner)](Tape<T>& t,
                                                                            std::size_t self) {
        auto gy = t.grad(self);
        auto mv = t.value(im);
        auto xv = t.value(ix);
        const bool gm = t.node(im).requires_grad, gx = t.node(ix).requires_grad;
        for (std::size_t r = 0; r < owner.size(); ++r) {
          const T* m = mv.data() + owner[r] * mm;
          const T* xr = xv.data() + r * in;
          const T* g = gy.data() + r * outw;
          if (gm) {
            T* dm = t.grad(im).data() + owner[r] * mm;
            for (std::size_t o = 0; o < outw; ++o)
              for (std::size_t i = 0; i < in; ++i) {
                if (transpose)
                  dm[i * mat_cols + o] += g[o] * xr[i];
                else
                  dm[o * mat_cols + i] += g[o] * xr[i];
              }
          }
          if (gx) {
            T* dx = t.grad(ix).data() + r * in;
            for (std::size_t i = 0; i < in; ++i) {
              double acc = 0.0;
              for (std::size_t o = 0; o < outw; ++o)
                acc += static_cast<double>(transpose ? m[i * mat_cols + o] : m[o * mat_cols + i]) * g[o];
              dx[i] += static_cast<T>(acc);
            }
          }
        }
      });
}

}  // namespace metamf::ad
