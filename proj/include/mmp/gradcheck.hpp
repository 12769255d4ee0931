/*
 * Copyright 2026 The MMP Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <vector>

#include "mmp/autodiff.hpp"

namespace mmp {

/// Builds a scalar loss on the given tape from the store's current values.
using LossFn = std::function<Var(Tape&, ParameterStore&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

inline double evaluate_loss(const LossFn& f, ParameterStore& store) {
  Tape tape;
  return f(tape, store).value().item();
}

/// Compares backward() against central differences on every coordinate of
/// every trainable parameter. The error per coordinate is
/// |analytic − numeric| / max(1, |numeric|); the maximum is reported.
inline GradCheckResult finite_diff_check_detailed(const LossFn& f, ParameterStore& store, double eps = 1e-4) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw OracleError("eps must lie in (0, 1e-2]");
  {
    Tape tape;
    Var loss = f(tape, store);
    backward(loss, store);
  }
  const double base0 = evaluate_loss(f, store);
  const double base1 = evaluate_loss(f, store);
  if (std::bit_cast<std::uint64_t>(base0) != std::bit_cast<std::uint64_t>(base1)) {
    throw OracleError("loss function is not deterministic: " + std::to_string(base0) + " vs " +
                      std::to_string(base1));
  }
  std::vector<Tensor> analytic;
  for (const auto& e : store) analytic.push_back(e.grad);

  GradCheckResult result;
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& e = store.entry(p);
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double saved = e.value[i];
      e.value[i] = saved + eps;
      const double up = evaluate_loss(f, store);
      e.value[i] = saved - eps;
      const double down = evaluate_loss(f, store);
      e.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = std::max(err, result.max_rel_error);
        result.worst_parameter = e.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

inline double finite_diff_check(const LossFn& f, ParameterStore& store, double eps = 1e-4) {
  return finite_diff_check_detailed(f, store, eps).max_rel_error;
}

}  // namespace mmp
