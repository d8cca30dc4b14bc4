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

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "metamf/dataset.hpp"
#include "metamf/errors.hpp"
#include "metamf/model.hpp"
#include "metamf/training.hpp"

namespace metamf {

namespace detail {
inline void check_pair(std::span<const double> p, std::span<const double> t, const char* op) {
  if (p.size() != t.size())
    throw ContractError(std::string(op) + ": " + std::to_string(p.size()) + " predictions vs " +
                        std::to_string(t.size()) + " targets");
  if (p.empty()) throw ContractError(std::string(op) + ": empty input");
}
}  // namespace detail

inline double mae(std::span<const double> predictions, std::span<const double> targets) {
  detail::check_pair(predictions, targets, "mae");
  double acc = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) acc += std::abs(targets[k] - predictions[k]);
  return acc / static_cast<double>(predictions.size());
}

inline double mse(std::span<const double> predictions, std::span<const double> targets) {
  detail::check_pair(predictions, targets, "mse");
  double acc = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double d = targets[k] - predictions[k];
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

// FNV-1a over (user, item, rating bits) of every record, in order.
inline std::uint64_t record_set_hash(std::span<const RatingRecord> records) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v, int bytes) {
    for (int k = 0; k < bytes; ++k) {
      h ^= (v >> (8 * k)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& r : records) {
    feed(r.user, 4);
    feed(r.item, 4);
    feed(std::bit_cast<std::uint64_t>(r.rating), 8);
  }
  return h;
}

struct GroupMetrics {
  double mae = 0.0;
  std::size_t n = 0;
  std::optional<double> delta_mae;
};

struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;
  std::size_t n = 0;
  std::map<GroupLabel, GroupMetrics> groups;
  std::optional<double> beta;
  std::optional<double> delta_mae;
  std::uint64_t test_hash = 0;
  Variant variant = Variant::MetaMF;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
};

// ΔMAE@β = MAE@β / MAE@1.0; both reports must come from the same test set.
inline double delta_mae_at_beta(const EvalReport& at_beta, const EvalReport& at_full) {
  if (at_beta.test_hash != at_full.test_hash)
    throw ContractError("delta_mae_at_beta: reports were computed on different test sets");
  if (!(at_full.mae > 0.0)) throw ContractError("delta_mae_at_beta: baseline MAE is zero");
  return at_beta.mae / at_full.mae;
}

inline EvalReport make_report(std::span<const RatingRecord> test, std::span<const double> predictions) {
  std::vector<double> targets(test.size());
  for (std::size_t k = 0; k < test.size(); ++k) targets[k] = test[k].rating;
  EvalReport r;
  r.mae = mae(predictions, targets);
  r.mse = mse(predictions, targets);
  r.n = test.size();
  r.test_hash = record_set_hash(test);
  return r;
}

// Adds the per-group breakdown: MAE over test ratings of each group's users.
inline void group_mae(EvalReport& report, std::span<const RatingRecord> test,
                      std::span<const double> predictions, const UserGroups& groups) {
  if (test.size() != predictions.size()) throw ContractError("group_mae: size mismatch");
  for (const UserGroup* g : {&groups.low, &groups.med, &groups.high}) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < test.size(); ++k) {
      if (!g->contains(test[k].user)) continue;
      acc += std::abs(test[k].rating - predictions[k]);
      ++n;
    }
    if (n == 0)
      throw ContractError(std::string("group_mae: group ") + to_string(g->label) +
                          " has no ratings in the test set");
    report.groups[g->label] = {acc / static_cast<double>(n), n, std::nullopt};
  }
}

template <class T>
EvalReport evaluate(const MetaParams<T>& params, std::span<const RatingRecord> test,
                    const UserGroups* groups = nullptr, bool clip = false) {
  const auto pred = predict_records(params, test, clip);
  EvalReport r = make_report(test, pred);
  r.variant = params.config.variant;
  r.seed = params.seed;
  if (groups) group_mae(r, test, pred, *groups);
  return r;
}

// Absolute errors of the test ratings whose user is in `group`.
inline std::vector<double> group_errors(std::span<const RatingRecord> test,
                                        std::span<const double> predictions, const UserGroup& group) {
  std::vector<double> out;
  for (std::size_t k = 0; k < test.size(); ++k)
    if (group.contains(test[k].user)) out.push_back(std::abs(test[k].rating - predictions[k]));
  return out;
}

// Mean absolute error per user of `group` that has test ratings.
inline std::vector<double> per_user_group_errors(std::span<const RatingRecord> test,
                                                 std::span<const double> predictions,
                                                 const UserGroup& group) {
  std::map<std::uint32_t, std::pair<double, std::size_t>> acc;
  for (std::size_t k = 0; k < test.size(); ++k)
    if (group.contains(test[k].user)) {
      auto& [s, n] = acc[test[k].user];
      s += std::abs(test[k].rating - predictions[k]);
      ++n;
    }
  std::vector<double> out;
  for (const auto& [u, sn] : acc) out.push_back(sn.first / static_cast<double>(sn.second));
  return out;
}

enum class Significance { None, Alpha05, Alpha0001 };

inline const char* to_string(Significance s) {
  switch (s) {
    case Significance::None: return "none";
    case Significance::Alpha05: return "0.05";
    case Significance::Alpha0001: return "0.0001";
  }
  return "?";
}

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value_one_tailed = 0.5;
  Significance significance = Significance::None;
  bool degenerate = false;
};

// Welch's unequal-variance t-test, one-tailed, H1: mean(a) > mean(b).
inline TTestResult one_tailed_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ContractError("one_tailed_t_test: each sample needs at least 2 values");
  auto moments = [](std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair{m, ss / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  const double se2 = sa + sb;

  TTestResult r;
  if (se2 == 0.0) {
    r.degenerate = true;
    r.degrees_of_freedom = na + nb - 2.0;
    if (ma == mb) {
      r.t_statistic = 0.0;
      r.p_value_one_tailed = 0.5;
    } else {
      r.t_statistic = ma > mb ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
      r.p_value_one_tailed = ma > mb ? 0.0 : 1.0;
    }
  } else {
    r.t_statistic = (ma - mb) / std::sqrt(se2);
    r.degrees_of_freedom = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    const boost::math::students_t_distribution<double> dist(r.degrees_of_freedom);
    r.p_value_one_tailed = boost::math::cdf(boost::math::complement(dist, r.t_statistic));
  }
  if (r.p_value_one_tailed < 0.0001) r.significance = Significance::Alpha0001;
  else if (r.p_value_one_tailed < 0.05) r.significance = Significance::Alpha05;
  return r;
}

struct SweepOptions {
  std::uint64_t sample_seed = 0;
  const UserGroups* groups = nullptr;
  bool clip = false;
  std::size_t jobs = 1;
  // β = 1.0 report from an earlier, interrupted run of the same sweep.
  std::optional<EvalReport> baseline;
  // Called once per finished β, in completion order, with ΔMAE bound. Calls
  // are serialized.
  std::function<void(const EvalReport&)> on_report;
};

namespace detail {
inline void bind_delta(EvalReport& r, const EvalReport& base) {
  r.delta_mae = delta_mae_at_beta(r, base);
  for (auto& [label, g] : r.groups) {
    auto it = base.groups.find(label);
    if (it != base.groups.end() && it->second.mae > 0.0) g.delta_mae = g.mae / it->second.mae;
  }
}
}  // namespace detail

// For each β: sample R^β from the training set, train from scratch, and
// evaluate on the fixed test set. Reports come back in `betas` order, with
// ΔMAE@β bound to the β = 1.0 run when one exists.
template <class T = float>
std::vector<EvalReport> beta_sweep(const ModelConfig& model_config, const TrainConfig& train_config,
                                   const DatasetSplit& split, const std::vector<double>& betas,
                                   const SweepOptions& options = {}) {
  if (betas.empty()) throw ContractError("beta_sweep: no budgets given");
  for (double b : betas)
    if (!(b > 0.0 && b <= 1.0)) throw ContractError("beta_sweep: every beta must lie in (0, 1]");

  std::vector<std::optional<EvalReport>> done(betas.size());
  std::optional<EvalReport> base = options.baseline;
  std::vector<std::size_t> pending;  // finished but waiting for the baseline
  std::mutex mu;

  auto finish = [&](std::size_t k, EvalReport r) {
    std::lock_guard lock(mu);
    done[k] = std::move(r);
    if (betas[k] == 1.0 && !base) base = done[k];
    pending.push_back(k);
    if (!base && std::find(betas.begin(), betas.end(), 1.0) != betas.end()) return;
    for (auto p : pending) {
      if (base) detail::bind_delta(*done[p], *base);
      if (options.on_report) options.on_report(*done[p]);
    }
    pending.clear();
  };

  auto run = [&](std::size_t k) {
    const auto sample = sample_privacy_budget(split.train, betas[k], options.sample_seed);
    auto result = train<T>(model_config, train_config, split.n_users, split.n_items,
                           std::span<const RatingRecord>(sample.records),
                           std::span<const RatingRecord>(split.validation));
    EvalReport r = evaluate(result.params, std::span<const RatingRecord>(split.test), options.groups,
                            options.clip);
    r.beta = betas[k];
    r.n_train = sample.records.size();
    r.seed = train_config.seed;
    finish(k, std::move(r));
  };

  // β = 1.0 first so that later reports can be bound as they finish.
  std::vector<std::size_t> order(betas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return betas[a] > betas[b]; });

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, betas.size()));
  if (jobs == 1) {
    for (auto k : order) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < order.size();) {
          try {
            run(order[i]);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }
  {
    // Without any β = 1.0 report, flush unbound reports.
    std::lock_guard lock(mu);
    for (auto p : pending)
      if (options.on_report) options.on_report(*done[p]);
    pending.clear();
  }
  std::vector<EvalReport> out;
  for (auto& r : done) out.push_back(std::move(*r));
  return out;
}

// CSV rows: one overall row (empty group) plus one per group.
inline void write_report_csv_header(std::ostream& os) {
  os << "dataset,variant,beta,mae,mse,delta_mae,group,n,seed\n";
}

inline void write_report_csv(std::ostream& os, const std::string& dataset, const EvalReport& r) {
  const auto old = os.precision(10);
  auto beta = [&] {
    if (r.beta) os << *r.beta;
  };
  os << dataset << ',' << to_string(r.variant) << ',';
  beta();
  os << ',' << r.mae << ',' << r.mse << ',';
  if (r.delta_mae) os << *r.delta_mae;
  os << ",," << r.n << ',' << r.seed << '\n';
  for (const auto& [label, g] : r.groups) {
    os << dataset << ',' << to_string(r.variant) << ',';
    beta();
    os << ',' << g.mae << ",,";
    if (g.delta_mae) os << *g.delta_mae;
    os << ',' << to_string(label) << ',' << g.n << ',' << r.seed << '\n';
  }
  os.precision(old);
}

}  // namespace metamf
