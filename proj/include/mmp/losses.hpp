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

#include <cmath>
#include <span>
#include <vector>

#include "mmp/autodiff.hpp"

namespace mmp {

/// Mean smooth-L1 between `pred` and `target`:
/// 0.5·δ²/β when |δ| < β, |δ| − 0.5β otherwise, with δ = pred − target.
/// `target` is treated as a constant; gradient reaches `pred` only.
inline Var smooth_l1(const Var& pred, const Var& target, double beta = 1.0) {
  if (!(beta > 0.0)) throw ValidationError("smooth_l1 beta must be positive");
  const Tensor& p = pred.value();
  const Tensor t = target.value();
  if (p.shape() != t.shape()) {
    throw DimensionError("smooth_l1 shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(t.shape()));
  }
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    const double a = std::abs(d);
    total += a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
  }
  return pred.tape().record(Tensor::scalar(total / n), {pred}, [pred, t, beta, n](Tape& tape, const Tensor& g) {
    const Tensor& p = pred.value();
    Tensor& gp = tape.grad(pred);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - t[i];
      const double slope = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
      gp[i] += g[0] * slope / n;
    }
  });
}

/// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
inline Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw DimensionError("cross_entropy expects [b×C] logits, got " + shape_str(z.shape()));
  const std::size_t b = z.extent(0), c = z.extent(1);
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) +
                         " rows");
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                            " outside [0, " + std::to_string(c) + ")");
    }
  }
  Tensor probs = softmax_rows(z);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = z.data().data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    total += mx + std::log(s) - row[labels[i]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape().record(Tensor::scalar(total / static_cast<double>(b)), {logits},
                              [logits, probs = std::move(probs), y = std::move(y), b, c](Tape& t, const Tensor& g) {
                                Tensor& gz = t.grad(logits);
                                const double w = g[0] / static_cast<double>(b);
                                for (std::size_t i = 0; i < b; ++i)
                                  for (std::size_t j = 0; j < c; ++j) {
                                    const double ind = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
                                    gz[i * c + j] += w * (probs[i * c + j] - ind);
                                  }
                              });
}

/// Mean squared error between equally shaped tensors.
inline double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("mse shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Cosine similarity of two flat vectors; 1 when both are zero.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 1.0;
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

}  // namespace mmp
