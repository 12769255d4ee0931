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

// Masked modality projection.
//
// For every masked modality i the projector estimates its tokens from the
// available ones:
//
//   bank_j   = attend(update; base_j, T_j)          j available
//   bank_i   = base_i                                i masked (untouched)
//   X_ij     = attend(relation_i; bank_i, bank_j)
//   A_j      = attend(refine_i; T_j, X_ij)
//   S        = rows of A_j in fixed slots for all j != i (zeros when j masked)
//   T'_i     = to_native_i(mix_i(mlp_i(S)))
//
// Everything is recomputed per forward pass; the base tokens change only
// through the optimizer.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmp/attention.hpp"
#include "mmp/autodiff.hpp"
#include "mmp/layers.hpp"
#include "mmp/losses.hpp"
#include "mmp/masking.hpp"

namespace mmp {

using VarMap = std::map<std::size_t, Var>;

/// Native token layout of one modality: N tokens of width d_i.
struct ModalityShape {
  std::string name;
  std::size_t tokens = 0;
  std::size_t width = 0;
};

struct ProjectionConfig {
  std::size_t common_width = 16;
  std::size_t aggregated_tokens = 8;
  std::size_t heads = 4;
  std::size_t hidden = 32;
  /// One update-attention block per modality instead of a shared one.
  bool per_modality_update = false;
};

enum class AdaptDirection { kToCommon, kToNative };

/// Linear maps between a modality's native width and the common width.
struct DimensionAdapter {
  LinearLayer to_common;
  LinearLayer to_native;

  DimensionAdapter() = default;
  DimensionAdapter(ParameterStore& store, const std::string& modality, std::size_t native, std::size_t common,
                   std::uint64_t seed) {
    const Init init = native == common ? Init::kIdentity : Init::kScaled;
    to_common = LinearLayer(store, "adapter." + modality + ".to_common", native, common, seed, init);
    to_native = LinearLayer(store, "adapter." + modality + ".to_native", common, native, seed, init);
  }
};

/// Parameters of the projection function for one target modality.
struct ProjectorParams {
  AttentionParams relation;
  AttentionParams refine;
  Mlp mlp;
  /// Maps the stacked slot rows (sum of the other modalities' token counts)
  /// to the target's token count, one feature column at a time.
  LinearLayer mixer;
};

/// Everything computed while projecting one masked modality.
struct ProjectionTrace {
  std::size_t target = 0;
  VarMap relation;  // X_ij per available j, [K×d]
  VarMap attended;  // A_j per available j, [N_j×d]
  Var concatenated; // slot rows, [S×d]
  Var projected;    // T'_i in native width, [N_i×d_i]
};

class AggregatedTokenBank {
 public:
  AggregatedTokenBank() = default;

  AggregatedTokenBank(ParameterStore& store, const std::vector<ModalityShape>& modalities,
                      const ProjectionConfig& cfg, std::uint64_t seed)
      : tokens_(cfg.aggregated_tokens), width_(cfg.common_width) {
    for (const auto& m : modalities) {
      std::string name = "bank." + m.name + ".base";
      store.add(name, random_normal(seed, name, Shape{tokens_, width_}, 1.0));
      base_.push_back(std::move(name));
    }
    if (cfg.per_modality_update) {
      for (const auto& m : modalities)
        update_.push_back(AttentionParams::create(store, "bank." + m.name + ".update", width_, cfg.heads, seed));
    } else {
      update_.push_back(AttentionParams::create(store, "bank.update", width_, cfg.heads, seed));
    }
  }

  /// Aggregated tokens for this pass: refreshed against the real tokens for
  /// available modalities, the untouched base parameter for masked ones.
  /// `tokens` must hold common-width tokens for exactly the available set.
  VarMap refresh(Tape& tape, const ParameterStore& store, const MaskPattern& pattern, const VarMap& tokens) const {
    check_modalities(pattern);
    for (const auto& [j, _] : tokens) {
      if (j >= base_.size()) throw ContractError("token entry for unknown modality " + std::to_string(j));
      if (pattern.is_masked(j)) throw ContractError("token entry supplied for masked modality " + std::to_string(j));
    }
    VarMap out;
    for (std::size_t j = 0; j < base_.size(); ++j) {
      Var base = tape.param(store, base_[j]);
      if (pattern.is_masked(j)) {
        out.emplace(j, base);
        continue;
      }
      auto it = tokens.find(j);
      if (it == tokens.end()) throw ContractError("missing tokens for available modality " + std::to_string(j));
      out.emplace(j, cross_attention(tape, store, update_for(j), base, it->second));
    }
    return out;
  }

  const std::string& base_name(std::size_t j) const { return base_.at(j); }
  const AttentionParams& update_for(std::size_t j) const { return update_.size() == 1 ? update_[0] : update_.at(j); }
  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t num_modalities() const noexcept { return base_.size(); }

 private:
  void check_modalities(const MaskPattern& pattern) const {
    if (pattern.num_modalities() != base_.size()) {
      throw ContractError("mask pattern covers " + std::to_string(pattern.num_modalities()) +
                          " modalities, bank has " + std::to_string(base_.size()));
    }
  }

  std::size_t tokens_ = 0;
  std::size_t width_ = 0;
  std::vector<std::string> base_;
  std::vector<AttentionParams> update_;
};

/// Smooth-L1 (β = 1) between projected and real tokens averaged over the
/// masked modalities. Real tokens are constants. Zero for empty maps.
inline Var alignment_loss(Tape& tape, const VarMap& projected, const VarMap& real) {
  if (projected.size() != real.size() ||
      !std::equal(projected.begin(), projected.end(), real.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw ContractError("alignment_loss: projected and real token maps have different modalities");
  }
  if (projected.empty()) return tape.constant(Tensor::scalar(0.0));
  Var total;
  for (const auto& [i, pred] : projected) {
    Var term = smooth_l1(pred, real.at(i), 1.0);
    total = total.valid() ? add(total, term) : term;
  }
  return projected.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(projected.size()));
}

/// Aggregated-token bank, one projector per modality, and the width adapters.
class ModalityProjector {
 public:
  ModalityProjector() = default;

  ModalityProjector(ParameterStore& store, std::vector<ModalityShape> modalities, const ProjectionConfig& cfg,
                    std::uint64_t seed)
      : modalities_(std::move(modalities)), cfg_(cfg) {
    if (modalities_.empty()) throw ContractError("projector needs at least one modality");
    for (const auto& m : modalities_) {
      if (m.tokens == 0 || m.width == 0) throw DimensionError("modality '" + m.name + "' has a zero extent");
    }
    for (const auto& m : modalities_) adapters_.emplace_back(store, m.name, m.width, cfg_.common_width, seed);
    bank_ = AggregatedTokenBank(store, modalities_, cfg_, seed);
    for (std::size_t i = 0; i < modalities_.size(); ++i) {
      const std::string prefix = "proj." + modalities_[i].name;
      ProjectorParams p;
      p.relation = AttentionParams::create(store, prefix + ".relation", cfg_.common_width, cfg_.heads, seed);
      p.refine = AttentionParams::create(store, prefix + ".refine", cfg_.common_width, cfg_.heads, seed);
      p.mlp = Mlp(store, prefix + ".mlp", cfg_.common_width, cfg_.hidden, cfg_.common_width, seed);
      const std::size_t slot_rows = this->slot_rows(i);
      // Mixer rows only exist with at least one other modality.
      if (slot_rows > 0) p.mixer = LinearLayer(store, prefix + ".mixer", slot_rows, modalities_[i].tokens, seed);
      projectors_.push_back(std::move(p));
    }
  }

  /// Linear width change for one modality's tokens.
  Var adapt(Tape& tape, const ParameterStore& store, std::size_t modality, const Var& tokens,
            AdaptDirection direction) const {
    const DimensionAdapter& a = adapters_.at(modality);
    const LinearLayer& layer = direction == AdaptDirection::kToCommon ? a.to_common : a.to_native;
    if (tokens.value().cols() != layer.in()) {
      throw DimensionError("adapter for '" + modalities_[modality].name + "' expects width " +
                           std::to_string(layer.in()) + ", got " + shape_str(tokens.shape()));
    }
    return layer(tape, store, tokens);
  }

  VarMap refresh_bank(Tape& tape, const ParameterStore& store, const MaskPattern& pattern, const VarMap& tokens) const {
    return bank_.refresh(tape, store, pattern, tokens);
  }

  /// Projects masked modality `target` from common-width tokens of exactly
  /// the available modalities, given this pass's aggregated tokens.
  ProjectionTrace project(Tape& tape, const ParameterStore& store, const VarMap& bank_view, std::size_t target,
                          const MaskPattern& pattern, const VarMap& tokens) const {
    if (pattern.num_modalities() != modalities_.size()) throw ContractError("mask pattern / modality count mismatch");
    if (pattern.available().empty()) throw ProjectionError("no available modality to project from");
    if (!pattern.is_masked(target)) {
      throw ContractError("projection target " + std::to_string(target) + " is not masked");
    }
    if (tokens.size() != pattern.available().size()) {
      throw ContractError("projection needs tokens for exactly the available modalities");
    }
    for (auto j : pattern.available()) {
      if (!tokens.contains(j)) throw ContractError("missing tokens for available modality " + std::to_string(j));
    }

    const ProjectorParams& p = projectors_[target];
    const Var& target_bank = bank_view.at(target);
    ProjectionTrace trace;
    trace.target = target;

    const Tensor& sample = tokens.begin()->second.value();
    const bool batched = sample.rank() == 3;
    const std::size_t batch = sample.batch();

    std::vector<Var> slots;
    for (std::size_t j = 0; j < modalities_.size(); ++j) {
      if (j == target) continue;
      if (pattern.is_masked(j)) {
        Shape zs = batched ? Shape{batch, modalities_[j].tokens, cfg_.common_width}
                           : Shape{modalities_[j].tokens, cfg_.common_width};
        slots.push_back(tape.constant(Tensor::zeros(std::move(zs))));
        continue;
      }
      Var x = cross_attention(tape, store, p.relation, target_bank, bank_view.at(j));
      Var att = cross_attention(tape, store, p.refine, tokens.at(j), x);
      trace.relation.emplace(j, x);
      trace.attended.emplace(j, att);
      slots.push_back(att);
    }
    trace.concatenated = concat_rows(slots);
    Var encoded = p.mlp(tape, store, trace.concatenated);
    Var mixed = transpose_last(p.mixer(tape, store, transpose_last(encoded)));
    trace.projected = adapt(tape, store, target, mixed, AdaptDirection::kToNative);
    return trace;
  }

  /// Full pipeline from native-width tokens of the available modalities:
  /// adapt, refresh the bank, and project every masked modality independently.
  std::map<std::size_t, ProjectionTrace> project_masked(Tape& tape, const ParameterStore& store, const MaskPattern& pattern,
                                                        const VarMap& native_tokens) const {
    VarMap common;
    for (auto j : pattern.available()) {
      auto it = native_tokens.find(j);
      if (it == native_tokens.end()) throw ContractError("missing tokens for available modality " + std::to_string(j));
      common.emplace(j, adapt(tape, store, j, it->second, AdaptDirection::kToCommon));
    }
    std::map<std::size_t, ProjectionTrace> traces;
    if (pattern.empty()) return traces;
    VarMap bank_view = refresh_bank(tape, store, pattern, common);
    for (auto i : pattern.masked()) traces.emplace(i, project(tape, store, bank_view, i, pattern, common));
    return traces;
  }

  std::size_t slot_rows(std::size_t target) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < modalities_.size(); ++j)
      if (j != target) s += modalities_[j].tokens;
    return s;
  }

  const std::vector<ModalityShape>& modalities() const noexcept { return modalities_; }
  const ProjectionConfig& config() const noexcept { return cfg_; }
  const AggregatedTokenBank& bank() const noexcept { return bank_; }
  const ProjectorParams& projector(std::size_t i) const { return projectors_.at(i); }
  const DimensionAdapter& adapter(std::size_t i) const { return adapters_.at(i); }

 private:
  std::vector<ModalityShape> modalities_;
  ProjectionConfig cfg_;
  std::vector<DimensionAdapter> adapters_;
  AggregatedTokenBank bank_;
  std::vector<ProjectorParams> projectors_;
};

}  // namespace mmp
