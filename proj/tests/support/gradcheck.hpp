// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gfolds/rng.hpp"
#include "gfolds/tensor.hpp"

namespace gfolds::testing {

inline Tensor64 random_tensor64(Shape shape, Rng& rng, double scale = 1.0,
                                bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    x = scale * (2.0 * rng.uniform() - 1.0);
  }
  return Tensor64::from(std::move(shape), std::move(v), requires_grad);
}

inline Tensor random_tensor(Shape shape, Rng& rng, float scale = 1.0f, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) {
    x = scale * static_cast<float>(2.0 * rng.uniform() - 1.0);
  }
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences on the 64-bit path. `loss` must rebuild the
// graph from the current values of `inputs` and return a scalar.
// Relative error is measured per input tensor as ||a - n|| / max(||a||, ||n||)
// in the Euclidean norm, which stays meaningful where single gradient entries
// cross zero; entries with both norms below `floor` count as exact.
inline GradCheckResult gradcheck(std::vector<Tensor64> inputs,
                                 const std::function<Tensor64()>& loss, double step = 1e-5,
                                 double floor = 1e-8, std::size_t max_per_input = 0) {
  for (auto& t : inputs) {
    t.clear_grad();
  }
  const Tensor64 out = loss();
  out.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  GradCheckResult r;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor64 t = inputs[k];
    auto data = t.mutable_data();
    double diff2 = 0.0;
    double an2 = 0.0;
    double num2 = 0.0;
    const std::size_t limit =
        max_per_input == 0 ? data.size() : std::min(max_per_input, data.size());
    for (std::size_t i = 0; i < limit; ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = loss().item();
      data[i] = saved - step;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
      diff2 += (a - numeric) * (a - numeric);
      an2 += a * a;
      num2 += numeric * numeric;
      ++r.checked;
    }
    const double denom = std::sqrt(std::max(an2, num2));
    if (denom >= floor) {
      r.max_rel_error = std::max(r.max_rel_error, std::sqrt(diff2) / denom);
    }
  }
  return r;
}

}  // namespace gfolds::testing
