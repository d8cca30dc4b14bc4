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

// MetaMF: a meta network turns each user's collaborative vector into that
// user's private two-layer rating network and a low-rank personalisation of
// shared item embeddings.
//
//   c_u = softmax(e_u) . memory                      (collaborative vector)
//   h   = ReLU(c_u W_h + b_h)                        (meta hidden state)
//   W1_u, b1_u, W2_u, b2_u = h U_* + b_*             (rating-network heads)
//   P_u, Q_u               = h U_p + b_p, h U_q + b_q
//   E_u = B (I + P_u Q_u)                            (personal item embeddings)
//   r_hat(u, i) = W2_u ReLU(W1_u E_u[i] + b1_u) + b2_u
//
// Everything is batched row-wise: a batch of users becomes an (m x width)
// matrix, and per-user generated matrices are applied to per-record rows
// with ad::gathered_matvec.
//
// NoMetaMF detaches every meta-network and item-generation parameter with
// stop_gradient, so those stay at their initial values while gradients
// still reach c_u and, through it, the user embeddings and the memory.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metamf/autodiff.hpp"
#include "metamf/dataset.hpp"
#include "metamf/errors.hpp"
#include "metamf/rng.hpp"
#include "metamf/tensor.hpp"

namespace metamf {

enum class Variant { MetaMF, NoMetaMF };

inline const char* to_string(Variant v) { return v == Variant::MetaMF ? "metamf" : "nometamf"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "metamf" || s == "MetaMF") return Variant::MetaMF;
  if (s == "nometamf" || s == "NoMetaMF") return Variant::NoMetaMF;
  throw ContractError("unknown variant '" + std::string(s) + "' (expected metamf or nometamf)");
}

struct ModelConfig {
  std::size_t d_user = 32;
  std::size_t d_collab = 32;
  std::size_t d_hidden_meta = 64;
  std::size_t d_item = 16;
  std::size_t d_rp_hidden = 8;
  std::size_t r_lowrank = 4;
  Variant variant = Variant::MetaMF;

  void validate() const {
    if (d_user == 0 || d_collab == 0 || d_hidden_meta == 0 || d_item == 0 || d_rp_hidden == 0 ||
        r_lowrank == 0)
      throw ContractError("ModelConfig: every width must be at least 1");
    if (r_lowrank > d_item) throw ContractError("ModelConfig: r_lowrank must not exceed d_item");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Every learnable tensor of the model. Matrices applied to row-batched
// activations are stored input-major (fan_in x fan_out).
template <class T>
struct MetaParams {
  ModelConfig config;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::uint64_t seed = 0;

  Tensor<T> user_embeddings;  // n_users x d_user
  Tensor<T> memory;           // d_user x d_collab
  Tensor<T> w_h;              // d_collab x d_hidden_meta
  Tensor<T> b_h;              // d_hidden_meta
  Tensor<T> u_w1, b_w1;       // d_hidden_meta x (d_rp_hidden * d_item)
  Tensor<T> u_b1, b_b1;       // d_hidden_meta x d_rp_hidden
  Tensor<T> u_w2, b_w2;       // d_hidden_meta x d_rp_hidden
  Tensor<T> u_b2, b_b2;       // d_hidden_meta x 1
  Tensor<T> base_items;       // n_items x d_item
  Tensor<T> u_p, b_p;         // d_hidden_meta x (d_item * r_lowrank)
  Tensor<T> u_q, b_q;         // d_hidden_meta x (r_lowrank * d_item)

  using Named = std::vector<std::pair<std::string_view, Tensor<T>*>>;
  using ConstNamed = std::vector<std::pair<std::string_view, const Tensor<T>*>>;

  // Fixed order; also the checkpoint order.
  Named named() {
    return {{"user_embeddings", &user_embeddings},
            {"memory", &memory},
            {"meta.w_h", &w_h},
            {"meta.b_h", &b_h},
            {"meta.u_w1", &u_w1},
            {"meta.b_w1", &b_w1},
            {"meta.u_b1", &u_b1},
            {"meta.b_b1", &b_b1},
            {"meta.u_w2", &u_w2},
            {"meta.b_w2", &b_w2},
            {"meta.u_b2", &u_b2},
            {"meta.b_b2", &b_b2},
            {"items.base", &base_items},
            {"itemgen.u_p", &u_p},
            {"itemgen.b_p", &b_p},
            {"itemgen.u_q", &u_q},
            {"itemgen.b_q", &b_q}};
  }
  ConstNamed named() const {
    ConstNamed out;
    for (auto [name, t] : const_cast<MetaParams*>(this)->named()) out.emplace_back(name, t);
    return out;
  }

  // Parameters NoMetaMF never updates: all but user_embeddings and memory.
  static bool frozen_without_meta(std::string_view name) {
    return name != "user_embeddings" && name != "memory";
  }
  bool is_trainable(std::string_view name) const {
    return config.variant == Variant::MetaMF || !frozen_without_meta(name);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto [name, t] : named()) n += t->size();
    return n;
  }

  void zero_grads() {
    for (auto [name, t] : named()) t->zero_grad();
  }

  void check_user(std::size_t u) const {
    if (u >= n_users)
      throw ContractError("user index " + std::to_string(u) + " out of range [0, " +
                          std::to_string(n_users) + ")");
  }
  void check_item(std::size_t i) const {
    if (i >= n_items)
      throw ContractError("item index " + std::to_string(i) + " out of range [0, " +
                          std::to_string(n_items) + ")");
  }

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static MetaParams initialize(const ModelConfig& config, std::size_t n_users, std::size_t n_items,
                               std::uint64_t seed) {
    config.validate();
    if (n_users == 0 || n_items == 0) throw ContractError("MetaParams: empty user or item set");
    MetaParams p;
    p.config = config;
    p.n_users = n_users;
    p.n_items = n_items;
    p.seed = seed;
    const std::size_t hm = config.d_hidden_meta, rp = config.d_rp_hidden, di = config.d_item,
                      rk = config.r_lowrank;
    Rng rng(mix_seed(seed, 0x1417));
    auto weight = [&rng](std::size_t fan_in, std::size_t fan_out) {
      Tensor<T> t({fan_in, fan_out});
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (T& v : t.values) v = static_cast<T>(rng.uniform(-a, a));
      return t;
    };
    auto bias = [](std::size_t n) { return Tensor<T>({n}); };
    // Embedding tables take their row width as fan_in.
    auto embedding = [&rng](std::size_t rows, std::size_t width) {
      Tensor<T> t({rows, width});
      const double a = 1.0 / std::sqrt(static_cast<double>(width));
      for (T& v : t.values) v = static_cast<T>(rng.uniform(-a, a));
      return t;
    };
    p.user_embeddings = embedding(n_users, config.d_user);
    p.memory = weight(config.d_user, config.d_collab);
    p.w_h = weight(config.d_collab, hm);
    p.b_h = bias(hm);
    p.u_w1 = weight(hm, rp * di);
    p.b_w1 = bias(rp * di);
    p.u_b1 = weight(hm, rp);
    p.b_b1 = bias(rp);
    p.u_w2 = weight(hm, rp);
    p.b_w2 = bias(rp);
    p.u_b2 = weight(hm, 1);
    p.b_b2 = bias(1);
    p.base_items = embedding(n_items, di);
    p.u_p = weight(hm, di * rk);
    p.b_p = bias(di * rk);
    p.u_q = weight(hm, rk * di);
    p.b_q = bias(rk * di);
    for (auto [name, t] : p.named()) t->requires_grad = true;
    return p;
  }
};

// Closed-form learnable scalar count.
inline std::size_t expected_parameter_count(const ModelConfig& c, std::size_t n_users,
                                            std::size_t n_items) {
  const std::size_t hm = c.d_hidden_meta;
  return n_users * c.d_user + c.d_user * c.d_collab + (c.d_collab + 1) * hm +
         (hm + 1) * (c.d_rp_hidden * c.d_item) + 2 * (hm + 1) * c.d_rp_hidden + (hm + 1) +
         n_items * c.d_item + 2 * (hm + 1) * (c.d_item * c.r_lowrank);
}

// Private rating model of one user.
template <class T>
struct PerUserModel {
  Tensor<T> w1;               // d_rp_hidden x d_item
  Tensor<T> b1;               // d_rp_hidden
  Tensor<T> w2;               // 1 x d_rp_hidden
  Tensor<T> b2;               // scalar
  Tensor<T> item_embeddings;  // n_items x d_item

  bool operator==(const PerUserModel&) const = default;
};

namespace model {

// Parameters placed on a tape. With track = false nothing is differentiated;
// under NoMetaMF everything except the user embeddings and memory is
// detached.
template <class T>
struct Bound {
  const MetaParams<T>* params = nullptr;
  ad::Var<T> user_embeddings, memory, w_h, b_h, u_w1, b_w1, u_b1, b_b1, u_w2, b_w2, u_b2, b_b2,
      base_items, u_p, b_p, u_q, b_q;
};

template <class T>
Bound<T> bind(ad::Tape<T>& tape, MetaParams<T>& p, bool track = true) {
  Bound<T> b;
  b.params = &p;
  const bool detach_meta = p.config.variant == Variant::NoMetaMF;
  auto put = [&](Tensor<T>& t, bool meta) {
    if (!track) return tape.view(t);
    ad::Var<T> v = tape.leaf(t);
    return meta && detach_meta ? ad::stop_gradient(v) : v;
  };
  b.user_embeddings = put(p.user_embeddings, false);
  b.memory = put(p.memory, false);
  b.w_h = put(p.w_h, true);
  b.b_h = put(p.b_h, true);
  b.u_w1 = put(p.u_w1, true);
  b.b_w1 = put(p.b_w1, true);
  b.u_b1 = put(p.u_b1, true);
  b.b_b1 = put(p.b_b1, true);
  b.u_w2 = put(p.u_w2, true);
  b.b_w2 = put(p.b_w2, true);
  b.u_b2 = put(p.u_b2, true);
  b.b_b2 = put(p.b_b2, true);
  b.base_items = put(p.base_items, true);
  b.u_p = put(p.u_p, true);
  b.b_p = put(p.b_p, true);
  b.u_q = put(p.u_q, true);
  b.b_q = put(p.b_q, true);
  return b;
}

template <class T>
Bound<T> bind_readonly(ad::Tape<T>& tape, const MetaParams<T>& p) {
  return bind(tape, const_cast<MetaParams<T>&>(p), false);
}

// Generated per-user tensors for a batch of m users, one row per user.
template <class T>
struct Generated {
  ad::Var<T> collab;  // m x d_collab
  ad::Var<T> hidden;  // m x d_hidden_meta
  ad::Var<T> w1;      // m x (d_rp_hidden * d_item)
  ad::Var<T> b1;      // m x d_rp_hidden
  ad::Var<T> w2;      // m x d_rp_hidden
  ad::Var<T> b2;      // m x 1
  ad::Var<T> p;       // m x (d_item * r_lowrank)
  ad::Var<T> q;       // m x (r_lowrank * d_item)
};

template <class T>
ad::Var<T> collaborative_vectors(const Bound<T>& b, const std::vector<std::size_t>& users) {
  for (auto u : users) b.params->check_user(u);
  auto e = ad::gather_rows(b.user_embeddings, users);
  return ad::matmul(ad::softmax_rows(e), b.memory);
}

// Meta network applied to collaborative vectors (m x d_collab).
template <class T>
Generated<T> generate(const Bound<T>& b, ad::Var<T> collab) {
  const auto& c = b.params->config;
  if (collab.shape().size() != 2 || collab.cols() != c.d_collab)
    throw ShapeError("generate: collaborative vectors must be m x " + std::to_string(c.d_collab) +
                     ", got " + shape_string(collab.shape()));
  Generated<T> g;
  g.collab = collab;
  g.hidden = ad::relu(ad::add(ad::matmul(collab, b.w_h), b.b_h));
  auto head = [&](ad::Var<T> u, ad::Var<T> bias) { return ad::add(ad::matmul(g.hidden, u), bias); };
  g.w1 = head(b.u_w1, b.b_w1);
  g.b1 = head(b.u_b1, b.b_b1);
  g.w2 = head(b.u_w2, b.b_w2);
  g.b2 = head(b.u_b2, b.b_b2);
  g.p = head(b.u_p, b.b_p);
  g.q = head(b.u_q, b.b_q);
  return g;
}

// Personal embeddings E_u[i] = B[i] + (B[i] P_u) Q_u for each (owner, item).
template <class T>
ad::Var<T> item_embeddings(const Bound<T>& b, const Generated<T>& g,
                           const std::vector<std::size_t>& owner,
                           const std::vector<std::size_t>& items) {
  const auto& c = b.params->config;
  for (auto i : items) b.params->check_item(i);
  auto base = ad::gather_rows(b.base_items, items);
  auto low = ad::gathered_matvec(g.p, base, owner, c.d_item, c.r_lowrank, true);
  auto delta = ad::gathered_matvec(g.q, low, owner, c.r_lowrank, c.d_item, true);
  return ad::add(base, delta);
}

// Rating network of owner[r] applied to embedding row r; returns n x 1.
template <class T>
ad::Var<T> rate(const Bound<T>& b, const Generated<T>& g, const std::vector<std::size_t>& owner,
                ad::Var<T> embeddings) {
  const auto& c = b.params->config;
  auto pre = ad::add(ad::gathered_matvec(g.w1, embeddings, owner, c.d_rp_hidden, c.d_item, false),
                     ad::gather_rows(g.b1, owner));
  auto hidden = ad::relu(pre);
  return ad::add(ad::gathered_matvec(g.w2, hidden, owner, 1, c.d_rp_hidden, false),
                 ad::gather_rows(g.b2, owner));
}

// Predictions for (users[r], items[r]); returns n x 1.
template <class T>
ad::Var<T> predict(const Bound<T>& b, const std::vector<std::size_t>& users,
                   const std::vector<std::size_t>& items) {
  if (users.size() != items.size() || users.empty())
    throw ContractError("predict: users and items must be equal-length and nonempty");
  std::map<std::size_t, std::size_t> slot;
  std::vector<std::size_t> unique_users;
  std::vector<std::size_t> owner(users.size());
  for (std::size_t r = 0; r < users.size(); ++r) {
    auto [it, fresh] = slot.try_emplace(users[r], unique_users.size());
    if (fresh) unique_users.push_back(users[r]);
    owner[r] = it->second;
  }
  auto g = generate(b, collaborative_vectors(b, unique_users));
  return rate(b, g, owner, item_embeddings(b, g, owner, items));
}

template <class T>
ad::Var<T> predict(const Bound<T>& b, std::span<const RatingRecord> records) {
  std::vector<std::size_t> users(records.size()), items(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    users[r] = records[r].user;
    items[r] = records[r].item;
  }
  return predict(b, users, items);
}

// Mean squared error of the model over `records`, on the tape.
template <class T>
ad::Var<T> mse_objective(const Bound<T>& b, std::span<const RatingRecord> records) {
  auto pred = predict(b, records);
  Tensor<T> target({records.size(), 1});
  for (std::size_t r = 0; r < records.size(); ++r) target.values[r] = static_cast<T>(records[r].rating);
  return ad::mse_loss(pred, pred.tape().constant(std::move(target)));
}

}  // namespace model

// Inference helpers. None of these touch gradients.

template <class T>
Tensor<T> collaborative_vector(const MetaParams<T>& params, std::size_t u) {
  ad::Tape<T> tape;
  auto b = model::bind_readonly(tape, params);
  auto c = model::collaborative_vectors(b, {u}).to_tensor();
  c.shape = {params.config.d_collab};
  return c;
}

namespace detail {
template <class T>
model::Generated<T> generate_from(ad::Tape<T>& tape, const model::Bound<T>& b,
                                  const Tensor<T>& c_u) {
  if (c_u.size() != b.params->config.d_collab)
    throw ShapeError("collaborative vector must have " + std::to_string(b.params->config.d_collab) +
                     " entries, got " + std::to_string(c_u.size()));
  Tensor<T> row({1, c_u.size()}, c_u.values);
  return model::generate(b, tape.constant(std::move(row)));
}
}  // namespace detail

// Rating-network weights for collaborative vector c_u. item_embeddings is
// left empty; see generate_item_embeddings().
template <class T>
PerUserModel<T> generate_rating_model(const MetaParams<T>& params, const Tensor<T>& c_u) {
  ad::Tape<T> tape;
  auto b = model::bind_readonly(tape, params);
  auto g = detail::generate_from(tape, b, c_u);
  const auto& c = params.config;
  PerUserModel<T> m;
  m.w1 = g.w1.to_tensor();
  m.w1.shape = {c.d_rp_hidden, c.d_item};
  m.b1 = g.b1.to_tensor();
  m.b1.shape = {c.d_rp_hidden};
  m.w2 = g.w2.to_tensor();
  m.w2.shape = {1, c.d_rp_hidden};
  m.b2 = g.b2.to_tensor();
  m.b2.shape = {};
  return m;
}

// Full personalised item-embedding table B (I + P_u Q_u), n_items x d_item.
template <class T>
Tensor<T> generate_item_embeddings(const MetaParams<T>& params, const Tensor<T>& c_u) {
  ad::Tape<T> tape;
  auto b = model::bind_readonly(tape, params);
  auto g = detail::generate_from(tape, b, c_u);
  std::vector<std::size_t> owner(params.n_items, 0), items(params.n_items);
  std::iota(items.begin(), items.end(), std::size_t{0});
  return model::item_embeddings(b, g, owner, items).to_tensor();
}

template <class T>
PerUserModel<T> generate_user_model(const MetaParams<T>& params, std::size_t u) {
  const auto c_u = collaborative_vector(params, u);
  PerUserModel<T> m = generate_rating_model(params, c_u);
  m.item_embeddings = generate_item_embeddings(params, c_u);
  return m;
}

// Unclamped prediction for one (user, item) pair.
template <class T>
T predict_rating(const MetaParams<T>& params, std::size_t u, std::size_t i) {
  params.check_user(u);
  params.check_item(i);
  ad::Tape<T> tape;
  auto b = model::bind_readonly(tape, params);
  return model::predict(b, {u}, {i}).value()[0];
}

// Batched inference in chunks; optional clipping to [1, 5].
template <class T>
std::vector<double> predict_records(const MetaParams<T>& params,
                                    std::span<const RatingRecord> records, bool clip = false,
                                    std::size_t chunk = 4096) {
  std::vector<double> out;
  out.reserve(records.size());
  for (std::size_t off = 0; off < records.size(); off += chunk) {
    const auto part = records.subspan(off, std::min(chunk, records.size() - off));
    ad::Tape<T> tape;
    auto b = model::bind_readonly(tape, params);
    for (T v : model::predict(b, part).value()) {
      double x = static_cast<double>(v);
      if (clip) x = std::clamp(x, 1.0, 5.0);
      out.push_back(x);
    }
  }
  return out;
}

// Row k holds the flattened first-layer weights W1 of users[k].
template <class T>
Tensor<T> extract_first_layer_weights(const MetaParams<T>& params,
                                      const std::vector<std::size_t>& users) {
  const std::size_t width = params.config.d_rp_hidden * params.config.d_item;
  Tensor<T> out({users.size(), width});
  if (users.empty()) return out;
  ad::Tape<T> tape;
  auto b = model::bind_readonly(tape, params);
  auto g = model::generate(b, model::collaborative_vectors(b, users));
  auto v = g.w1.value();
  std::copy(v.begin(), v.end(), out.values.begin());
  return out;
}

// Row k holds the flattened d_item x d_item personalisation P_u Q_u of
// users[k]; it determines E_u completely given the shared base table.
template <class T>
Tensor<T> extract_item_transforms(const MetaParams<T>& params,
                                  const std::vector<std::size_t>& users) {
  const auto& c = params.config;
  Tensor<T> out({users.size(), c.d_item * c.d_item});
  if (users.empty()) return out;
  ad::Tape<T> tape;
  auto b = model::bind_readonly(tape, params);
  auto g = model::generate(b, model::collaborative_vectors(b, users));
  auto p = g.p.value();
  auto q = g.q.value();
  const std::size_t di = c.d_item, rk = c.r_lowrank;
  for (std::size_t k = 0; k < users.size(); ++k) {
    const T* pk = p.data() + k * di * rk;
    const T* qk = q.data() + k * rk * di;
    for (std::size_t i = 0; i < di; ++i)
      for (std::size_t j = 0; j < di; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rk; ++r) acc += static_cast<double>(pk[i * rk + r]) * qk[r * di + j];
        out.values[k * di * di + i * di + j] = static_cast<T>(acc);
      }
  }
  return out;
}

}  // namespace metamf
