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

// Central finite-difference oracle. It only ever evaluates the loss in the
// forward direction; the analytic side comes from Tape::backward.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "metamf/autodiff.hpp"
#include "metamf/rng.hpp"

namespace metamf::testing {

using LossBuilder =
    std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

struct GradCheck {
  std::size_t coordinates = 0;
  std::size_t passed = 0;
  double max_rel_error = 0.0;

  double pass_fraction() const {
    return coordinates ? static_cast<double>(passed) / static_cast<double>(coordinates) : 1.0;
  }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

inline double forward_loss(const std::vector<Tensor<double>*>& leaves, const LossBuilder& build) {
  ad::Tape<double> tape;
  std::vector<ad::Var<double>> vars;
  for (auto* t : leaves) vars.push_back(tape.leaf(*t));
  return build(tape, vars).value()[0];
}

inline std::vector<std::vector<double>> analytic_grads(const std::vector<Tensor<double>*>& leaves,
                                                       const LossBuilder& build) {
  for (auto* t : leaves) {
    t->requires_grad = true;
    t->zero_grad();
  }
  {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (auto* t : leaves) vars.push_back(tape.leaf(*t));
    tape.backward(build(tape, vars));
  }
  std::vector<std::vector<double>> out;
  for (auto* t : leaves) out.push_back(*t->grad);
  return out;
}

inline GradCheck check_gradients(const std::vector<Tensor<double>*>& leaves, const LossBuilder& build,
                                 double step = 1e-4, double tolerance = 1e-4) {
  const auto analytic = analytic_grads(leaves, build);
  GradCheck r;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto& values = leaves[l]->values;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + step;
      const double up = forward_loss(leaves, build);
      values[k] = saved - step;
      const double down = forward_loss(leaves, build);
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[l][k], numeric);
      r.max_rel_error = std::max(r.max_rel_error, err);
      ++r.coordinates;
      if (err < tolerance) ++r.passed;
    }
  }
  return r;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace metamf::testing
