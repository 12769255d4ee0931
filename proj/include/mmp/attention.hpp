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
#include <string>
#include <vector>

#include "mmp/autodiff.hpp"
#include "mmp/layers.hpp"

namespace mmp {

/// Names and extents of one multi-head cross-attention block. The four
/// d×d matrices live in a ParameterStore as "<prefix>.wq|wk|wv|wo".
struct AttentionParams {
  std::string prefix;
  std::size_t width = 0;
  std::size_t heads = 1;

  std::string wq() const { return prefix + ".wq"; }
  std::string wk() const { return prefix + ".wk"; }
  std::string wv() const { return prefix + ".wv"; }
  std::string wo() const { return prefix + ".wo"; }
  std::size_t head_width() const { return width / heads; }

  /// Registers the block: W_q, W_k, W_v ~ N(0, 1/d), W_o = I.
  static AttentionParams create(ParameterStore& store, std::string prefix, std::size_t width, std::size_t heads,
                                std::uint64_t seed) {
    if (heads == 0 || width == 0 || width % heads != 0) {
      throw DimensionError("attention width " + std::to_string(width) + " not divisible by " +
                           std::to_string(heads) + " heads");
    }
    AttentionParams p{std::move(prefix), width, heads};
    const double stddev = 1.0 / std::sqrt(static_cast<double>(width));
    for (const auto& name : {p.wq(), p.wk(), p.wv()}) store.add(name, random_normal(seed, name, Shape{width, width}, stddev));
    store.add(p.wo(), Tensor::identity(width));
    return p;
  }
};

/// softmax(Q·Kᵀ/√(d/H))·V per head, heads concatenated and merged by W_o,
/// where Q = queries·W_q, K = context·W_k, V = context·W_v.
///
/// Either operand may be a single token set [n×d] or a batch [b×n×d]; a
/// single set is shared across the other operand's batch.
inline Var cross_attention(Tape& tape, const ParameterStore& store, const AttentionParams& p, const Var& queries,
                           const Var& context) {
  const Tensor& q = queries.value();
  const Tensor& c = context.value();
  if (q.rank() < 2 || c.rank() < 2) {
    throw DimensionError("cross_attention needs token matrices, got " + shape_str(q.shape()) + " and " +
                         shape_str(c.shape()));
  }
  if (q.cols() != p.width || c.cols() != p.width) {
    throw DimensionError("cross_attention '" + p.prefix + "' width " + std::to_string(p.width) +
                         " vs queries " + shape_str(q.shape()) + ", context " + shape_str(c.shape()));
  }
  if (c.rows() == 0) throw ContractError("cross_attention '" + p.prefix + "' has an empty context");

  Var qp = matmul(queries, tape.param(store, p.wq()));
  Var kp = matmul(context, tape.param(store, p.wk()));
  Var vp = matmul(context, tape.param(store, p.wv()));
  const std::size_t dh = p.head_width();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Var> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Var qh = p.heads == 1 ? qp : slice_last(qp, h * dh, dh);
    Var kh = p.heads == 1 ? kp : slice_last(kp, h * dh, dh);
    Var vh = p.heads == 1 ? vp : slice_last(vp, h * dh, dh);
    Var weights = softmax_rows(scale(matmul(qh, transpose_last(kh)), inv_scale));
    heads.push_back(matmul(weights, vh));
  }
  Var merged = p.heads == 1 ? heads[0] : concat_last(heads);
  return matmul(merged, tape.param(store, p.wo()));
}

}  // namespace mmp
