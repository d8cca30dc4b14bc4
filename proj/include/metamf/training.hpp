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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "metamf/autodiff.hpp"
#include "metamf/dataset.hpp"
#include "metamf/errors.hpp"
#include "metamf/model.hpp"
#include "metamf/rng.hpp"

namespace metamf {

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 60;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (batch_size == 0) throw ContractError("TrainConfig: batch_size must be at least 1");
    if (patience == 0) throw ContractError("TrainConfig: patience must be at least 1");
    if (!(learning_rate > 0.0)) throw ContractError("TrainConfig: learning_rate must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string checkpoint_path;

  void write_csv(std::ostream& os) const {
    os << "epoch,train_mse,val_mse,seconds\n";
    os.precision(10);
    for (const auto& e : epochs)
      os << e.epoch << ',' << e.train_mse << ',' << e.val_mse << ',' << e.seconds << '\n';
  }
};

// Seeded permutation cut into contiguous batches of record positions; the
// last batch may be short.
inline std::vector<std::vector<std::size_t>> minibatch_iter(std::size_t n_records,
                                                            std::size_t batch_size,
                                                            std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ContractError("minibatch_iter: batch_size must be at least 1");
  std::vector<std::size_t> perm(n_records);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(epoch_seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t off = 0; off < n_records; off += batch_size)
    batches.emplace_back(perm.begin() + off, perm.begin() + std::min(off + batch_size, n_records));
  return batches;
}

// First-order update over the trainable tensors of a MetaParams. Frozen
// tensors are skipped outright.
template <class T>
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {}

  void step(MetaParams<T>& params) {
    ++t_;
    auto tensors = params.named();
    if (m_.empty()) {
      m_.resize(tensors.size());
      v_.resize(tensors.size());
    }
    const double lr = config_.learning_rate;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2, eps = config_.adam_epsilon;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      auto [name, tensor] = tensors[k];
      if (!params.is_trainable(name) || !tensor->grad) continue;
      auto& values = tensor->values;
      const auto& g = *tensor->grad;
      if (config_.optimizer == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < values.size(); ++i)
          values[i] = static_cast<T>(values[i] - lr * g[i]);
        continue;
      }
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.empty()) {
        m.assign(values.size(), 0.0);
        v.assign(values.size(), 0.0);
      }
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double gi = g[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        values[i] = static_cast<T>(values[i] - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  std::uint64_t steps() const noexcept { return t_; }

 private:
  TrainConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// One forward/backward/update on `batch`; returns the batch MSE before the
// update.
template <class T>
double train_step(MetaParams<T>& params, Optimizer<T>& opt, std::span<const RatingRecord> batch) {
  params.zero_grads();
  double loss = 0.0;
  {
    ad::Tape<T> tape;
    auto b = model::bind(tape, params);
    auto l = model::mse_objective(b, batch);
    loss = static_cast<double>(l.value()[0]);
    if (!std::isfinite(loss)) return loss;
    tape.backward(l);
  }
  opt.step(params);
  return loss;
}

template <class T>
double mse_of(const MetaParams<T>& params, std::span<const RatingRecord> records) {
  const auto pred = predict_records(params, records);
  double acc = 0.0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const double d = pred[k] - records[k].rating;
    acc += d * d;
  }
  return acc / static_cast<double>(records.size());
}

template <class T>
struct TrainResult {
  MetaParams<T> params;
  TrainLog log;
};

// Minibatch training on MSE with early stopping on validation MSE. The
// returned parameters are the end-of-epoch snapshot with the lowest
// validation MSE. Initialisation and shuffling derive from config.seed.
template <class T = float>
TrainResult<T> train(const ModelConfig& model_config, const TrainConfig& config,
                     std::size_t n_users, std::size_t n_items,
                     std::span<const RatingRecord> train_records,
                     std::span<const RatingRecord> val_records) {
  config.validate();
  if (train_records.empty()) throw ContractError("train: empty training set");
  if (val_records.empty()) throw ContractError("train: empty validation set");
  for (auto part : {train_records, val_records})
    for (const auto& r : part)
      if (r.user >= n_users || r.item >= n_items)
        throw ContractError("train: record (user " + std::to_string(r.user) + ", item " +
                            std::to_string(r.item) + ") outside the model's index range");

  auto params = MetaParams<T>::initialize(model_config, n_users, n_items, config.seed);
  Optimizer<T> opt(config);
  TrainLog log;
  log.config = config;
  std::optional<MetaParams<T>> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<RatingRecord> batch;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = minibatch_iter(train_records.size(), config.batch_size,
                                        mix_seed(config.seed, 0xe90c + epoch));
    double sq = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      batch.clear();
      for (auto k : batches[bi]) batch.push_back(train_records[k]);
      const double loss = train_step(params, opt, std::span<const RatingRecord>(batch));
      if (!std::isfinite(loss))
        throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(bi));
      sq += loss * static_cast<double>(batch.size());
    }
    const double val = mse_of(params, val_records);
    if (!std::isfinite(val))
      throw NumericalError("training diverged: non-finite validation MSE at epoch " +
                           std::to_string(epoch));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back({epoch, sq / static_cast<double>(train_records.size()), val, secs});
    if (val < best_val) {
      best_val = val;
      best = params;
      log.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  if (!best) best = params;
  for (auto [name, t] : best->named()) t->grad.reset();
  return {std::move(*best), std::move(log)};
}

}  // namespace metamf
