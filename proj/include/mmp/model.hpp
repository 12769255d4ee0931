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

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmp/layers.hpp"
#include "mmp/losses.hpp"
#include "mmp/masking.hpp"
#include "mmp/projection.hpp"

namespace mmp {

/// What replaces the tokens of a missing modality before its branch.
enum class SubstitutionMode { kZeroFill, kMmp, kLinearProjection };

inline std::string_view to_string(SubstitutionMode m) {
  switch (m) {
    case SubstitutionMode::kZeroFill: return "zero_fill";
    case SubstitutionMode::kMmp: return "mmp";
    case SubstitutionMode::kLinearProjection: return "linear_projection";
  }
  return "?";
}

inline SubstitutionMode parse_substitution_mode(std::string_view s) {
  if (s == "zero_fill") return SubstitutionMode::kZeroFill;
  if (s == "mmp") return SubstitutionMode::kMmp;
  if (s == "linear_projection") return SubstitutionMode::kLinearProjection;
  throw ValidationError("unknown substitution mode '" + std::string(s) + "'");
}

struct ModalitySpec {
  std::string name;
  std::size_t tokens = 8;
  std::size_t width = 8;
  std::size_t feature_length = 64;
};

struct ModelConfig {
  std::vector<ModalitySpec> modalities;
  std::size_t classes = 4;
  std::size_t common_width = 16;
  std::size_t aggregated_tokens = 8;
  std::size_t heads = 4;
  std::size_t projector_hidden = 32;
  std::size_t encoder_hidden = 32;
  bool per_modality_update = false;

  void validate() const {
    if (modalities.empty()) throw ValidationError("model needs at least one modality");
    if (classes < 2) throw ValidationError("model needs at least two classes");
    for (const auto& m : modalities) {
      if (m.tokens == 0 || m.width == 0 || m.feature_length == 0) {
        throw ValidationError("modality '" + m.name + "' has a zero extent");
      }
    }
    if (common_width == 0 || aggregated_tokens == 0 || heads == 0 || projector_hidden == 0 || encoder_hidden == 0) {
      throw ValidationError("model extents must be positive");
    }
    if (common_width % heads != 0) throw ValidationError("common width must be divisible by the head count");
  }
};

/// Raw per-modality inputs, each [b×feature_length].
using InputMap = std::map<std::size_t, Tensor>;

struct ForwardOptions {
  /// Embed the raw inputs of masked modalities (when supplied) as detached
  /// alignment targets.
  bool collect_targets = true;
  /// Use these as alignment targets instead of embedding masked inputs.
  const std::map<std::size_t, Tensor>* fixed_targets = nullptr;
};

struct ForwardResult {
  Var logits;                                    // [b×C]
  VarMap branch_tokens;                          // tokens entering each branch, native width
  VarMap projected;                              // substituted tokens of masked modalities (mmp / lp)
  VarMap real;                                   // detached alignment targets, same keys subset
  std::map<std::size_t, ProjectionTrace> traces; // mmp only
};

struct LossBreakdown {
  Var task;
  Var alignment;
  Var total;

  double task_value() const { return task.value().item(); }
  double alignment_value() const { return alignment.value().item(); }
  double total_value() const { return total.value().item(); }
};

/// Small multimodal classifier with a branch per modality.
///
/// embed_m: raw row -> [N_m×d_m] tokens; masked modalities are substituted;
/// each branch applies a per-token MLP and mean-pools; pooled features are
/// concatenated and fed to a linear head.
class MmpModel {
 public:
  MmpModel() = default;

  MmpModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
    cfg_.validate();
    const std::size_t m = cfg_.modalities.size();
    for (const auto& spec : cfg_.modalities) {
      embed_.emplace_back(store_, "embed." + spec.name, spec.feature_length, spec.tokens * spec.width, seed);
    }
    std::vector<ModalityShape> shapes;
    for (const auto& spec : cfg_.modalities) shapes.push_back({spec.name, spec.tokens, spec.width});
    ProjectionConfig pc;
    pc.common_width = cfg_.common_width;
    pc.aggregated_tokens = cfg_.aggregated_tokens;
    pc.heads = cfg_.heads;
    pc.hidden = cfg_.projector_hidden;
    pc.per_modality_update = cfg_.per_modality_update;
    projector_ = ModalityProjector(store_, std::move(shapes), pc, seed);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t in = 0;
      for (std::size_t j = 0; j < m; ++j)
        if (j != i) in += cfg_.modalities[j].tokens * cfg_.modalities[j].width;
      const auto& spec = cfg_.modalities[i];
      if (in > 0) lp_.emplace_back(store_, "lp." + spec.name, in, spec.tokens * spec.width, seed);
      else lp_.emplace_back();
    }
    std::size_t pooled = 0;
    for (const auto& spec : cfg_.modalities) {
      encoder_.emplace_back(store_, "encoder." + spec.name, spec.width, cfg_.encoder_hidden, spec.width, seed);
      pooled += spec.width;
    }
    head_ = LinearLayer(store_, "head", pooled, cfg_.classes, seed);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  const ModalityProjector& projector() const noexcept { return projector_; }
  std::size_t num_modalities() const noexcept { return cfg_.modalities.size(); }

  std::vector<std::string> modality_names() const {
    std::vector<std::string> names;
    for (const auto& m : cfg_.modalities) names.push_back(m.name);
    return names;
  }

  /// Raw input [b×feature_length] -> tokens [b×N_i×d_i].
  Var embed(Tape& tape, std::size_t modality, const Tensor& input) const {
    const ModalitySpec& spec = cfg_.modalities.at(modality);
    if (input.rank() != 2 || input.cols() != spec.feature_length) {
      throw DimensionError("input for modality '" + spec.name + "' must be [b×" +
                           std::to_string(spec.feature_length) + "], got " + shape_str(input.shape()));
    }
    Var flat = embed_[modality](tape, store_, tape.constant(input));
    return reshape(flat, {input.rows(), spec.tokens, spec.width});
  }

  VarMap embed(Tape& tape, const InputMap& inputs) const {
    VarMap out;
    for (const auto& [i, x] : inputs) out.emplace(i, embed(tape, i, x));
    return out;
  }

  /// Classifier forward under a mask pattern. Inputs must cover the available
  /// modalities; inputs of masked modalities are only ever used as alignment
  /// targets, never for prediction.
  ForwardResult forward(Tape& tape, const InputMap& inputs, const MaskPattern& pattern, SubstitutionMode mode,
                        const ForwardOptions& options = {}) const {
    const std::size_t m = num_modalities();
    if (pattern.num_modalities() != m) {
      throw ContractError("mask pattern covers " + std::to_string(pattern.num_modalities()) + " modalities, model has " +
                          std::to_string(m));
    }
    if (pattern.available().empty()) throw ContractError("forward needs at least one available modality");
    std::size_t batch = 0;
    for (auto j : pattern.available()) {
      auto it = inputs.find(j);
      if (it == inputs.end()) throw ContractError("missing input for available modality '" + cfg_.modalities[j].name + "'");
      const std::size_t b = it->second.rows();
      if (batch && b != batch) throw DimensionError("inputs disagree on batch size");
      batch = b;
    }

    ForwardResult r;
    VarMap available;
    for (auto j : pattern.available()) available.emplace(j, embed(tape, j, inputs.at(j)));

    if (mode != SubstitutionMode::kZeroFill) {
      for (auto i : pattern.masked()) {
        if (options.fixed_targets) {
          if (auto it = options.fixed_targets->find(i); it != options.fixed_targets->end()) {
            r.real.emplace(i, tape.constant(it->second));
          }
        } else if (options.collect_targets) {
          if (auto it = inputs.find(i); it != inputs.end()) r.real.emplace(i, detach(embed(tape, i, it->second)));
        }
      }
    }

    switch (mode) {
      case SubstitutionMode::kZeroFill:
        for (auto i : pattern.masked()) {
          const auto& spec = cfg_.modalities[i];
          r.branch_tokens.emplace(i, tape.constant(Tensor::zeros({batch, spec.tokens, spec.width})));
        }
        break;
      case SubstitutionMode::kMmp:
        r.traces = projector_.project_masked(tape, store_, pattern, available);
        for (const auto& [i, tr] : r.traces) {
          r.projected.emplace(i, tr.projected);
          r.branch_tokens.emplace(i, tr.projected);
        }
        break;
      case SubstitutionMode::kLinearProjection:
        for (auto i : pattern.masked()) {
          Var p = linear_projection(tape, i, pattern, available, batch);
          r.projected.emplace(i, p);
          r.branch_tokens.emplace(i, p);
        }
        break;
    }
    for (const auto& [j, v] : available) r.branch_tokens.emplace(j, v);

    std::vector<Var> pooled;
    for (std::size_t i = 0; i < m; ++i) pooled.push_back(mean_rows(encoder_[i](tape, store_, r.branch_tokens.at(i))));
    r.logits = head_(tape, store_, m == 1 ? pooled[0] : concat_last(pooled));
    return r;
  }

  /// task + alignment, where alignment covers masked modalities that have a
  /// real-token target and is zero when `alignment_active` is false.
  LossBreakdown total_loss(Tape& tape, const ForwardResult& r, std::span<const int> labels,
                           bool alignment_active) const {
    LossBreakdown out;
    out.task = cross_entropy(r.logits, labels);
    VarMap projected;
    if (alignment_active) {
      for (const auto& [i, real] : r.real) projected.emplace(i, r.projected.at(i));
      out.alignment = alignment_loss(tape, projected, r.real);
    } else {
      out.alignment = tape.constant(Tensor::scalar(0.0));
    }
    out.total = add(out.task, out.alignment);
    return out;
  }

  /// Logits only; nothing about the tape escapes.
  Tensor predict(const InputMap& inputs, const MaskPattern& pattern, SubstitutionMode mode) const {
    Tape tape;
    ForwardOptions opts;
    opts.collect_targets = false;
    return forward(tape, inputs, pattern, mode, opts).logits.value();
  }

  /// Sets every parameter whose name starts with `prefix` to zero.
  void zero_parameters(std::string_view prefix) {
    for (auto& e : store_)
      if (e.name.starts_with(prefix)) e.value.fill(0.0);
  }

  void set_trainable(std::string_view prefix, bool trainable) {
    for (auto& e : store_)
      if (e.name.starts_with(prefix)) e.trainable = trainable;
  }

 private:
  // Single linear map from the flattened tokens of all other modalities
  // (zeros for masked ones) to the target's flattened tokens.
  Var linear_projection(Tape& tape, std::size_t target, const MaskPattern& pattern, const VarMap& available,
                        std::size_t batch) const {
    std::vector<Var> parts;
    for (std::size_t j = 0; j < num_modalities(); ++j) {
      if (j == target) continue;
      const auto& spec = cfg_.modalities[j];
      const std::size_t flat = spec.tokens * spec.width;
      if (pattern.is_masked(j)) parts.push_back(tape.constant(Tensor::zeros({batch, flat})));
      else parts.push_back(reshape(available.at(j), {batch, flat}));
    }
    Var x = parts.size() == 1 ? parts[0] : concat_last(parts);
    const auto& spec = cfg_.modalities[target];
    return reshape(lp_[target](tape, store_, x), {batch, spec.tokens, spec.width});
  }

  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  ParameterStore store_;
  std::vector<LinearLayer> embed_;
  ModalityProjector projector_;
  std::vector<LinearLayer> lp_;
  std::vector<Mlp> encoder_;
  LinearLayer head_;
};

}  // namespace mmp
