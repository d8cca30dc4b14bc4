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

// Exact t-SNE and column standardisation for inspecting per-user generated
// weights and item embeddings in two dimensions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "metamf/errors.hpp"
#include "metamf/rng.hpp"
#include "metamf/tensor.hpp"

namespace metamf {

struct Standardized {
  Tensor<double> matrix;
  std::vector<std::size_t> degenerate_columns;  // sigma == 0, mapped to 0
};

// Column-wise (x - mean) / sigma with the population standard deviation.
template <class T>
Standardized standardize(const Tensor<T>& m) {
  const std::size_t r = m.rows(), c = m.cols();
  Standardized out{Tensor<double>({r, c}), {}};
  for (std::size_t j = 0; j < c; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < r; ++i) mu += static_cast<double>(m.values[i * c + j]);
    mu /= static_cast<double>(r);
    double ss = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      const double d = static_cast<double>(m.values[i * c + j]) - mu;
      ss += d * d;
    }
    const double sigma = std::sqrt(ss / static_cast<double>(r));
    if (!(sigma > 0.0)) {
      out.degenerate_columns.push_back(j);
      continue;
    }
    for (std::size_t i = 0; i < r; ++i)
      out.matrix.values[i * c + j] = (static_cast<double>(m.values[i * c + j]) - mu) / sigma;
  }
  return out;
}

struct EmbeddingRequest {
  Tensor<double> matrix;  // n_points x d
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  std::optional<double> learning_rate;  // default max(n / 12, 50)

  void validate() const {
    const std::size_t n = matrix.rows();
    if (matrix.rank() != 2) throw ContractError("tsne: input must be a matrix");
    if (matrix.cols() < 2) throw ContractError("tsne: need at least 2 input dimensions");
    if (!(perplexity > 0.0)) throw ContractError("tsne: perplexity must be positive");
    if (!(3.0 * perplexity < static_cast<double>(n))) {
      std::ostringstream os;
      os << "tsne: " << n << " points are too few for perplexity " << perplexity
         << "; use a perplexity below " << static_cast<double>(n) / 3.0;
      throw ContractError(os.str());
    }
    if (iterations < 250) throw ContractError("tsne: at least 250 iterations required");
    for (double v : matrix.values)
      if (!std::isfinite(v)) throw ContractError("tsne: non-finite input entry");
  }
};

struct Embedding2D {
  Tensor<double> coordinates;         // n_points x 2, standardised
  std::vector<std::string> ids;       // one per point
  std::vector<std::string> groups;    // empty string when unlabelled
  std::map<std::string, std::string> metadata;
};

namespace tsne {

inline std::vector<double> squared_distances(const Tensor<double>& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x.values[i * d + k] - x.values[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = out[j * n + i] = s;
    }
  return out;
}

struct Conditional {
  std::vector<double> p;        // n x n, row i is p(j | i), p(i | i) = 0
  std::vector<double> entropy;  // natural-log entropy of each row
  std::vector<double> precision;
};

// Per-point Gaussian precision found by bisection so that each conditional
// distribution has entropy log(perplexity).
inline Conditional conditional_affinities(const std::vector<double>& sqdist, std::size_t n,
                                          double perplexity, double tolerance = 1e-10,
                                          int max_steps = 200) {
  Conditional c{std::vector<double>(n * n, 0.0), std::vector<double>(n), std::vector<double>(n)};
  const double target = std::log(perplexity);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* d = sqdist.data() + i * n;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d[j]);
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = 0.0;
    for (int step = 0; step < max_steps; ++step) {
      double z = 0.0, wsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
          row[j] = 0.0;
          continue;
        }
        const double dj = d[j] - dmin;
        row[j] = std::exp(-beta * dj);
        z += row[j];
        wsum += dj * row[j];
      }
      h = std::log(z) + beta * wsum / z;
      const double diff = h - target;
      if (std::abs(diff) < tolerance) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += row[j];
    for (std::size_t j = 0; j < n; ++j) c.p[i * n + j] = row[j] / z;
    c.entropy[i] = h;
    c.precision[i] = beta;
  }
  return c;
}

// Symmetrised joint distribution (p(j|i) + p(i|j)) / 2n; sums to 1.
inline std::vector<double> joint_affinities(const Conditional& c, std::size_t n) {
  std::vector<double> p(n * n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = (c.p[i * n + j] + c.p[j * n + i]) / denom;
  return p;
}

}  // namespace tsne

// Exact t-SNE to two dimensions followed by column standardisation.
// Optimiser: gradient descent with momentum 0.5 then 0.8, adaptive gains,
// early exaggeration for the first `exaggeration_iterations` steps.
inline Embedding2D tsne_embed(const EmbeddingRequest& req) {
  req.validate();
  const std::size_t n = req.matrix.rows();
  const auto cond = tsne::conditional_affinities(tsne::squared_distances(req.matrix), n, req.perplexity);
  auto p = tsne::joint_affinities(cond, n);
  for (double& v : p) v = std::max(v, 1e-12);
  const double eta = req.learning_rate.value_or(std::max(static_cast<double>(n) / 12.0, 50.0));

  Rng rng(mix_seed(req.seed, 0x75e));
  std::vector<double> y(n * 2), update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2);
  for (double& v : y) v = 1e-4 * rng.normal();
  std::vector<double> num(n * n);

  for (std::size_t it = 0; it < req.iterations; ++it) {
    const double exaggeration = it < req.exaggeration_iterations ? req.early_exaggeration : 1.0;
    const double momentum = it < req.exaggeration_iterations ? 0.5 : 0.8;
    double zsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = q;
        zsum += 2.0 * q;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = num[i * n + j];
        const double mult = (exaggeration * p[i * n + j] - q / zsum) * q;
        gx += mult * (y[2 * i] - y[2 * j]);
        gy += mult * (y[2 * i + 1] - y[2 * j + 1]);
      }
      grad[2 * i] = 4.0 * gx;
      grad[2 * i + 1] = 4.0 * gy;
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = same_sign ? gains[k] * 0.8 : gains[k] + 0.2;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - eta * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
    }
  }

  Embedding2D e;
  e.coordinates = standardize(Tensor<double>({n, 2}, std::move(y))).matrix;
  e.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.ids[i] = std::to_string(i);
  e.groups.assign(n, "");
  std::ostringstream fmt;
  fmt.precision(17);
  auto put = [&e, &fmt](const char* key, double v) {
    fmt.str("");
    fmt << v;
    e.metadata[key] = fmt.str();
  };
  put("perplexity", req.perplexity);
  e.metadata["iterations"] = std::to_string(req.iterations);
  e.metadata["seed"] = std::to_string(req.seed);
  put("early_exaggeration", req.early_exaggeration);
  e.metadata["exaggeration_iterations"] = std::to_string(req.exaggeration_iterations);
  put("learning_rate", eta);
  e.metadata["init"] = "normal(0, 1e-4)";
  e.metadata["standardized"] = "true";
  return e;
}

// Mean silhouette coefficient of labelled points in the plane.
inline double silhouette_score(const Tensor<double>& coords, const std::vector<int>& labels) {
  const std::size_t n = coords.rows(), d = coords.cols();
  if (labels.size() != n) throw ContractError("silhouette_score: label count mismatch");
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double t = coords.values[a * d + k] - coords.values[b * d + k];
      s += t * t;
    }
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, std::size_t>> per;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) {
        auto& [s, c] = per[labels[j]];
        s += dist(i, j);
        ++c;
      }
    auto own = per.find(labels[i]);
    if (own == per.end() || per.size() < 2) continue;
    const double a = own->second.first / static_cast<double>(own->second.second);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, sc] : per)
      if (l != labels[i]) b = std::min(b, sc.first / static_cast<double>(sc.second));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

// CSV "id,x,y,group" plus a "<path>.meta" key=value sidecar.
inline void export_embedding(const Embedding2D& e, const std::string& path) {
  const std::size_t n = e.coordinates.rows();
  if (e.ids.size() != n || (!e.groups.empty() && e.groups.size() != n))
    throw ContractError("export_embedding: label count does not match point count");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.precision(17);
  os << "id,x,y,group\n";
  for (std::size_t i = 0; i < n; ++i)
    os << e.ids[i] << ',' << e.coordinates.values[2 * i] << ',' << e.coordinates.values[2 * i + 1]
       << ',' << (e.groups.empty() ? "" : e.groups[i]) << '\n';
  if (!os) throw IoError("write failed for '" + path + "'");
  std::ofstream meta(path + ".meta", std::ios::trunc);
  if (!meta) throw IoError("cannot open '" + path + ".meta' for writing");
  for (const auto& [k, v] : e.metadata) meta << k << '=' << v << '\n';
}

inline Embedding2D read_embedding_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != "id,x,y,group") throw IoError("embedding CSV: bad header");
  Embedding2D e;
  std::vector<double> xy;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 3) f.emplace_back();
    if (f.size() != 4) throw IoError("embedding CSV: bad row '" + line + "'");
    e.ids.push_back(f[0]);
    xy.push_back(std::stod(f[1]));
    xy.push_back(std::stod(f[2]));
    e.groups.push_back(f[3]);
  }
  e.coordinates = Tensor<double>({e.ids.size(), 2}, std::move(xy));
  return e;
}

}  // namespace metamf
