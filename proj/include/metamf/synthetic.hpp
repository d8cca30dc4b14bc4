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

// Synthetic rating data with known structure, for tests and desk-scale
// experiments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <set>
#include <vector>

#include "metamf/dataset.hpp"
#include "metamf/rng.hpp"

namespace metamf::synthetic {

// Complete rank-1 matrix r(u, i) = clip(a_u * b_i, 1, 5) with
// a_u, b_i ~ U[1, 2.2].
inline std::vector<RatingRecord> rank_one(std::size_t n_users, std::size_t n_items,
                                          std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x12a1));
  std::vector<double> a(n_users), b(n_items);
  for (double& x : a) x = rng.uniform(1.0, 2.2);
  for (double& x : b) x = rng.uniform(1.0, 2.2);
  std::vector<RatingRecord> out;
  for (std::uint32_t u = 0; u < n_users; ++u)
    for (std::uint32_t i = 0; i < n_items; ++i)
      out.push_back({u, i, std::clamp(a[u] * b[i], 1.0, 5.0)});
  return out;
}

struct ClusteredSpec {
  std::size_t n_users = 400;
  std::size_t n_items = 300;
  std::size_t n_clusters = 4;
  std::size_t rank = 4;
  std::size_t min_profile = 8;
  std::size_t max_profile = 240;
  double profile_sigma = 0.9;   // lognormal spread of profile sizes
  double user_spread = 0.35;    // deviation of a user from its cluster
  double noise = 0.25;
  double popularity_skew = 0.8;  // Zipf exponent for item choice
};

// Users belong to latent clusters with shared taste vectors plus personal
// deviation; items have latent factors and a bias. Profile sizes are
// lognormal and item choice is popularity-skewed, so per-user counts span
// a wide range. Ratings lie in [1, 5].
inline std::vector<RatingRecord> clustered(const ClusteredSpec& s, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc1a5));
  const std::size_t k = s.rank;
  std::vector<double> centers(s.n_clusters * k);
  for (double& x : centers) x = rng.normal();
  std::vector<double> items(s.n_items * k), item_bias(s.n_items);
  for (double& x : items) x = rng.normal() / std::sqrt(static_cast<double>(k));
  for (double& x : item_bias) x = 0.3 * rng.normal();
  std::vector<double> weights(s.n_items);
  for (std::size_t i = 0; i < s.n_items; ++i)
    weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), s.popularity_skew);
  std::vector<double> cdf(s.n_items);
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());

  std::vector<RatingRecord> out;
  const double log_mid = std::log(std::sqrt(static_cast<double>(s.min_profile * s.max_profile)));
  for (std::uint32_t u = 0; u < s.n_users; ++u) {
    const std::size_t c = rng.below(s.n_clusters);
    std::vector<double> taste(k);
    for (std::size_t d = 0; d < k; ++d) taste[d] = centers[c * k + d] + s.user_spread * rng.normal();
    const double user_bias = 0.25 * rng.normal();
    auto n = static_cast<std::size_t>(std::llround(std::exp(log_mid + s.profile_sigma * rng.normal())));
    n = std::clamp(n, s.min_profile, std::min(s.max_profile, s.n_items));
    std::set<std::uint32_t> chosen;
    while (chosen.size() < n) {
      const double x = rng.uniform() * cdf.back();
      const auto i = static_cast<std::uint32_t>(std::upper_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
      chosen.insert(std::min<std::uint32_t>(i, static_cast<std::uint32_t>(s.n_items - 1)));
    }
    for (auto i : chosen) {
      double dot = 0.0;
      for (std::size_t d = 0; d < k; ++d) dot += taste[d] * items[i * k + d];
      const double r = 3.2 + user_bias + item_bias[i] + 1.1 * dot + s.noise * rng.normal();
      out.push_back({u, i, std::clamp(r, 1.0, 5.0)});
    }
  }
  // Interleave users so file order carries no structure.
  rng.shuffle(std::span<RatingRecord>(out));
  return out;
}

inline void write_tsv(std::ostream& os, const std::vector<RatingRecord>& records) {
  os.precision(10);
  for (const auto& r : records) os << r.user << '\t' << r.item << '\t' << r.rating << '\n';
}

}  // namespace metamf::synthetic
