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
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "audioret/error.hpp"
#include "audioret/tensor.hpp"

namespace audioret {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_block = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate
// of every block, compared against the analytic gradient with
// |a - n| / max(1e-8, |a| + |n|). Blocks are perturbed in place and
// restored. 64-bit only: 32-bit differences are dominated by rounding.
inline GradCheckResult finite_difference_check(
    const std::function<double()>& loss,
    const std::vector<std::span<double>>& coords,
    const std::vector<std::span<const double>>& analytic, double eps = 1e-5) {
  if (coords.size() != analytic.size()) {
    fail("finite_difference_check: ", coords.size(), " blocks vs ",
         analytic.size(), " gradients");
  }
  GradCheckResult result;
  for (std::size_t b = 0; b < coords.size(); ++b) {
    if (coords[b].size() != analytic[b].size()) {
      fail("finite_difference_check: block ", b, " size mismatch");
    }
    for (std::size_t i = 0; i < coords[b].size(); ++i) {
      double& x = coords[b][i];
      const double saved = x;
      x = saved + eps;
      const double up = loss();
      x = saved - eps;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[b][i];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(a)) {
        fail("finite_difference_check: non-finite value at block ", b,
             " index ", i);
      }
      const double err =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > result.max_relative_error) {
        result = {err, b, i, a, numeric};
      }
    }
  }
  return result;
}

// Checks every tensor of a parameter set against the gradients already
// stored in its grad slots.
inline GradCheckResult finite_difference_check(const std::function<double()>& loss,
                                               ParamSet<double>& params,
                                               double eps = 1e-5) {
  std::vector<std::vector<double>> saved(params.size());
  std::vector<std::span<double>> coords;
  std::vector<std::span<const double>> analytic;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i].grad();
    saved[i].assign(g.begin(), g.end());
    coords.push_back(params[i].data());
  }
  for (const auto& s : saved) analytic.emplace_back(s);
  return finite_difference_check(loss, coords, analytic, eps);
}

}  // namespace audioret
