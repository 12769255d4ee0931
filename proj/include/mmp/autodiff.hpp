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

// Reverse-mode differentiation over a per-forward-pass tape.
//
// A Tape records every operation of one forward pass in creation order. Node
// ids are therefore a topological order and the backward sweep is a single
// reverse walk. Tapes are discarded after backward(); nothing persists across
// iterations except the ParameterStore.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmp/errors.hpp"
#include "mmp/parameters.hpp"
#include "mmp/tensor.hpp"

namespace mmp {

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const {
    if (!tape_) throw GraphError("use of an unrecorded variable");
    return *tape_;
  }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  inline bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called during the backward sweep with the node's accumulated gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  /// Leaf bound to a store parameter. Binding the same parameter twice
  /// returns the same node so gradients from both uses accumulate.
  Var param(const ParameterStore& store, std::string_view name) {
    const std::size_t index = store.index_of(name);
    auto key = std::make_pair(&store, index);
    if (auto it = bindings_.find(key); it != bindings_.end()) return Var(this, it->second);
    Var v = push(store.entry(index).value, true, {});
    bindings_.emplace(key, v.id());
    return v;
  }

  /// Records a node computed outside the built-in ops. `inputs` decide whether
  /// the node participates in differentiation; `fn` must accumulate into the
  /// inputs' gradients via `accumulate_grad`.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id()].requires_grad;
    }
    if (!value.all_finite()) throw NonFiniteError("non-finite value produced by a forward operation");
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor& value(const Var& v) const {
    check_owned(v);
    return nodes_[v.id()].value;
  }

  bool requires_grad(const Var& v) const {
    check_owned(v);
    return nodes_[v.id()].requires_grad;
  }

  /// Gradient buffer for `v`, zero-initialized on first touch. Only valid
  /// during or after a backward sweep.
  Tensor& grad(const Var& v) {
    check_owned(v);
    Node& n = nodes_[v.id()];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  bool has_grad(const Var& v) const {
    check_owned(v);
    return nodes_[v.id()].has_grad;
  }

  /// Adds `g` into the gradient of `v` if `v` participates in differentiation.
  void accumulate_grad(const Var& v, const Tensor& g) {
    if (!requires_grad(v)) return;
    Tensor& dst = grad(v);
    if (dst.size() != g.size()) {
      throw GraphError("gradient size " + shape_str(g.shape()) + " does not match node " +
                       shape_str(dst.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  /// Reverse sweep from a scalar node. Clears gradients from any previous sweep.
  void run_backward(const Var& loss) {
    check_owned(loss);
    if (nodes_[loss.id()].value.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    }
    for (auto& n : nodes_) n.has_grad = false;
    if (!nodes_[loss.id()].requires_grad) return;
    grad(loss).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      // No nodes are added during the sweep, so the reference stays valid.
      n.backward(*this, n.grad);
    }
  }

  /// Writes d(loss)/d(param) into every gradient slot of `store`, overwriting
  /// previous contents. Parameters never bound on this tape get zeros.
  void write_gradients(ParameterStore& store) const {
    for (std::size_t i = 0; i < store.size(); ++i) store.entry(i).grad.fill(0.0);
    for (const auto& [key, id] : bindings_) {
      if (key.first != &store) continue;
      const Node& n = nodes_[id];
      if (n.has_grad) store.entry(key.second).grad = n.grad;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, false, std::move(fn)});
    return Var(this, nodes_.size() - 1);
  }

  void check_owned(const Var& v) const {
    if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
      throw GraphError("variable does not belong to this computation record");
    }
  }

  std::vector<Node> nodes_;
  std::map<std::pair<const ParameterStore*, std::size_t>, std::size_t> bindings_;
};

inline const Tensor& Var::value() const { return tape().value(*this); }
inline bool Var::requires_grad() const { return tape().requires_grad(*this); }

/// Fills `store` gradient slots with d(loss)/d(param). Slots are overwritten.
inline void backward(const Var& loss, ParameterStore& store) {
  Tape& tape = loss.tape();
  tape.run_backward(loss);
  tape.write_gradients(store);
}

namespace kernels {

/// C[m×n] (+)= op(A)[m×k] · op(B)[k×n]; op transposes when the flag is set.
/// A is stored m×k (or k×m when transposed), B k×n (or n×k).
inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a[p * m + i];
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
        c[i * n + j] += s;
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
        c[i * n + j] += s;
      }
    }
  }
}

struct MatmulDims {
  std::size_t batch, m, k, n;
  bool a_batched, b_batched;
};

inline MatmulDims matmul_dims(const Shape& a, const Shape& b) {
  auto fail = [&] {
    throw DimensionError("matmul shape mismatch: " + shape_str(a) + " x " + shape_str(b));
  };
  if (a.size() < 2 || b.size() < 2) fail();
  MatmulDims d{};
  d.a_batched = a.size() == 3;
  d.b_batched = b.size() == 3;
  d.m = a[a.size() - 2];
  d.k = a.back();
  if (b[b.size() - 2] != d.k) fail();
  d.n = b.back();
  if (d.a_batched && d.b_batched && a[0] != b[0]) fail();
  d.batch = d.a_batched ? a[0] : (d.b_batched ? b[0] : 1);
  return d;
}

inline Shape matmul_shape(const MatmulDims& d) {
  if (d.a_batched || d.b_batched) return Shape{d.batch, d.m, d.n};
  return Shape{d.m, d.n};
}

}  // namespace kernels

/// Matrix product with rank-2 operands broadcast over the batch of a rank-3 one.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto d = kernels::matmul_dims(a.shape(), b.shape());
  Tensor out(kernels::matmul_shape(d));
  for (std::size_t s = 0; s < d.batch; ++s) {
    kernels::gemm(false, false, d.m, d.n, d.k, a.data().data() + (d.a_batched ? s * d.m * d.k : 0),
                  b.data().data() + (d.b_batched ? s * d.k * d.n : 0), out.data().data() + s * d.m * d.n,
                  false);
  }
  return out;
}

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = a.tape();
  const auto d = kernels::matmul_dims(a.shape(), b.shape());
  Tensor out = matmul(a.value(), b.value());
  return t.record(std::move(out), {a, b}, [a, b, d](Tape& t, const Tensor& g) {
    const double* gp = g.data().data();
    if (a.requires_grad()) {
      Tensor& ga = t.grad(a);
      const Tensor& bv = b.value();
      for (std::size_t s = 0; s < d.batch; ++s) {
        kernels::gemm(false, true, d.m, d.k, d.n, gp + s * d.m * d.n,
                      bv.data().data() + (d.b_batched ? s * d.k * d.n : 0),
                      ga.data().data() + (d.a_batched ? s * d.m * d.k : 0), true);
      }
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad(b);
      const Tensor& av = a.value();
      for (std::size_t s = 0; s < d.batch; ++s) {
        kernels::gemm(true, false, d.k, d.n, d.m, av.data().data() + (d.a_batched ? s * d.m * d.k : 0),
                      gp + s * d.m * d.n, gb.data().data() + (d.b_batched ? s * d.k * d.n : 0), true);
      }
    }
  });
}

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate_grad(a, g);
    t.accumulate_grad(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate_grad(a, g);
    if (b.requires_grad()) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = t.grad(a);
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad(b);
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

/// Adds a vector of length cols() to every row of `x`.
inline Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("bias of shape " + shape_str(bv.shape()) + " cannot broadcast over " +
                         shape_str(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t c = xv.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, c](Tape& t, const Tensor& g) {
    t.accumulate_grad(x, g);
    if (bias.requires_grad()) {
      Tensor& gb = t.grad(bias);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
}

/// GELU, tanh approximation.
inline Var gelu(const Var& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tensor out = x.value();
  for (auto& v : out.data()) {
    const double u = kC * (v + kA * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double u = kC * (v + kA * v * v * v);
      const double th = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
  });
}

/// Softmax along the last axis, with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.cols();
  if (x.rank() == 0 || n == 0) throw DimensionError("softmax over an empty row dimension " + shape_str(x.shape()));
  Tensor out = x;
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = out.data().data() + r * n;
    double mx = p[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, p[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = std::exp(p[j] - mx);
      s += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[j] /= s;
  }
  return out;
}

inline Var softmax_rows(const Var& x) {
  Tensor out = softmax_rows(x.value());
  const std::size_t n = out.cols();
  Tape& tape = x.tape();
  // Backward needs the output; it lives on the tape as this node's value.
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [x, n, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(Var(&t, self));
    Tensor& gx = t.grad(x);
    const std::size_t rows = y.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data().data() + r * n;
      const double* gr = g.data().data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yr[j] * (gr[j] - dot);
    }
  });
}

/// Swaps the last two axes.
inline Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t b = x.batch(), r = x.rows(), c = x.cols();
  Shape s = x.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  Tensor out(s);
  for (std::size_t k = 0; k < b; ++k) {
    const double* src = x.data().data() + k * r * c;
    double* dst = out.data().data() + k * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  return out;
}

inline Var transpose_last(const Var& x) {
  return x.tape().record(transpose_last(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate_grad(x, transpose_last(g));
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) { t.accumulate_grad(x, g); });
}

/// Columns [offset, offset + width) of the last axis.
inline Var slice_last(const Var& x, std::size_t offset, std::size_t width) {
  const Tensor& xv = x.value();
  const std::size_t c = xv.cols();
  if (xv.rank() == 0 || offset + width > c) {
    throw DimensionError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + width) +
                         ") out of range for " + shape_str(xv.shape()));
  }
  Shape s = xv.shape();
  s.back() = width;
  Tensor out(s);
  const std::size_t rows = xv.size() / c;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = xv[r * c + offset + j];
  return x.tape().record(std::move(out), {x}, [x, offset, width, c, rows](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < width; ++j) gx[r * c + offset + j] += g[r * width + j];
  });
}

/// Concatenation along the last axis. Leading extents must agree.
inline Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Tape& tape = parts[0].tape();
  const Shape& s0 = parts[0].shape();
  Shape lead(s0.begin(), s0.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw DimensionError("concat_last shape mismatch: " + shape_str(s0) + " vs " + shape_str(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  Shape os = s0;
  os.back() = total;
  Tensor out(os);
  const std::size_t rows = shape_size(lead);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) out[r * total + off + j] = pv[r * widths[k] + j];
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), std::span<const Var>(inputs),
                     [inputs, widths, total, rows](Tape& t, const Tensor& g) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         if (inputs[k].requires_grad()) {
                           Tensor& gk = t.grad(inputs[k]);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               gk[r * widths[k] + j] += g[r * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

/// Concatenation along the token (second-to-last) axis.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Tape& tape = parts[0].tape();
  const Tensor& v0 = parts[0].value();
  if (v0.rank() < 2) throw DimensionError("concat_rows needs rank >= 2, got " + shape_str(v0.shape()));
  const std::size_t batch = v0.batch(), cols = v0.cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    if (pv.rank() != v0.rank() || pv.batch() != batch || pv.cols() != cols) {
      throw DimensionError("concat_rows shape mismatch: " + shape_str(v0.shape()) + " vs " +
                           shape_str(pv.shape()));
    }
    heights.push_back(pv.rows());
    total += pv.rows();
  }
  Shape os = v0.shape();
  os[os.size() - 2] = total;
  Tensor out(os);
  std::size_t row_off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    const std::size_t h = heights[k];
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(pv.data().data() + b * h * cols, h * cols,
                  out.data().data() + (b * total + row_off) * cols);
    }
    row_off += h;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), std::span<const Var>(inputs),
                     [inputs, heights, total, batch, cols](Tape& t, const Tensor& g) {
                       std::size_t row_off = 0;
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         const std::size_t h = heights[k];
                         if (inputs[k].requires_grad()) {
                           Tensor& gk = t.grad(inputs[k]);
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t i = 0; i < h * cols; ++i)
                               gk[b * h * cols + i] += g[(b * total + row_off) * cols + i];
                         }
                         row_off += h;
                       }
                     });
}

/// Mean over the token (second-to-last) axis, which is removed:
/// [n×d] -> [d], [b×n×d] -> [b×d].
inline Var mean_rows(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("mean_rows needs rank >= 2, got " + shape_str(xv.shape()));
  const std::size_t b = xv.batch(), n = xv.rows(), c = xv.cols();
  Shape os = xv.rank() == 3 ? Shape{b, c} : Shape{c};
  Tensor out(os);
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) out[k * c + j] += xv[(k * n + i) * c + j];
  for (auto& v : out.data()) v /= static_cast<double>(n);
  return x.tape().record(std::move(out), {x}, [x, b, n, c](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[(k * n + i) * c + j] += g[k * c + j] * inv;
  });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (auto& v : gx.data()) v += g[0];
  });
}

/// Copy of the value with no gradient path back to `x`.
inline Var detach(const Var& x) { return x.tape().constant(x.value()); }

}  // namespace mmp
