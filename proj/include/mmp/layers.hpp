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
#include <random>
#include <string>
#include <utility>

#include "mmp/autodiff.hpp"
#include "mmp/random.hpp"

namespace mmp {

enum class Init {
  kScaled,    // N(0, 1/fan_in)
  kIdentity,  // identity matrix; requires in == out
  kZero,
};

/// Draws a [rows×cols] matrix from N(0, stddev²) using a stream private to `name`.
inline Tensor random_normal(std::uint64_t seed, const std::string& name, Shape shape, double stddev) {
  Rng rng = make_rng(seed, name);
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Affine map x·W + b applied to the last axis. Parameters live in a store
/// under "<prefix>.weight" [in×out] and "<prefix>.bias" [out].
class LinearLayer {
 public:
  LinearLayer() = default;

  LinearLayer(ParameterStore& store, std::string prefix, std::size_t in, std::size_t out, std::uint64_t seed,
              Init init = Init::kScaled)
      : prefix_(std::move(prefix)), in_(in), out_(out) {
    Tensor w(Shape{in, out});
    switch (init) {
      case Init::kScaled:
        w = random_normal(seed, weight_name(), Shape{in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
        break;
      case Init::kIdentity:
        if (in != out) throw DimensionError("identity init needs square layer, got " + std::to_string(in) + "x" + std::to_string(out));
        w = Tensor::identity(in);
        break;
      case Init::kZero:
        break;
    }
    store.add(weight_name(), std::move(w));
    store.add(bias_name(), Tensor(Shape{out}));
  }

  Var operator()(Tape& tape, const ParameterStore& store, const Var& x) const {
    if (x.value().cols() != in_ || x.value().rank() < 2) {
      throw DimensionError("linear '" + prefix_ + "' expects width " + std::to_string(in_) + ", got " +
                           shape_str(x.shape()));
    }
    return add_bias(matmul(x, tape.param(store, weight_name())), tape.param(store, bias_name()));
  }

  std::string weight_name() const { return prefix_ + ".weight"; }
  std::string bias_name() const { return prefix_ + ".bias"; }
  const std::string& prefix() const noexcept { return prefix_; }
  std::size_t in() const noexcept { return in_; }
  std::size_t out() const noexcept { return out_; }

 private:
  std::string prefix_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

/// Two linear layers with a GELU between them, applied row-wise.
class Mlp {
 public:
  Mlp() = default;

  Mlp(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
      std::uint64_t seed)
      : fc1_(store, prefix + ".fc1", in, hidden, seed), fc2_(store, prefix + ".fc2", hidden, out, seed) {}

  Var operator()(Tape& tape, const ParameterStore& store, const Var& x) const {
    return fc2_(tape, store, gelu(fc1_(tape, store, x)));
  }

  const LinearLayer& fc1() const noexcept { return fc1_; }
  const LinearLayer& fc2() const noexcept { return fc2_; }
  std::size_t in() const noexcept { return fc1_.in(); }
  std::size_t out() const noexcept { return fc2_.out(); }

 private:
  LinearLayer fc1_;
  LinearLayer fc2_;
};

}  // namespace mmp
