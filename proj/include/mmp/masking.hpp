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
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mmp/errors.hpp"
#include "mmp/random.hpp"

namespace mmp {

/// Which modalities are withheld in one iteration or evaluation scenario.
/// At least one modality is always available.
class MaskPattern {
 public:
  MaskPattern() = default;

  MaskPattern(std::size_t num_modalities, std::vector<std::size_t> masked)
      : num_modalities_(num_modalities), masked_(std::move(masked)) {
    std::sort(masked_.begin(), masked_.end());
    if (num_modalities_ == 0) throw ContractError("mask pattern needs at least one modality");
    if (std::adjacent_find(masked_.begin(), masked_.end()) != masked_.end()) {
      throw ContractError("mask pattern lists a modality twice");
    }
    if (!masked_.empty() && masked_.back() >= num_modalities_) {
      throw ContractError("masked modality " + std::to_string(masked_.back()) + " out of range");
    }
    if (masked_.size() >= num_modalities_) throw ContractError("mask pattern leaves no modality available");
    for (std::size_t i = 0; i < num_modalities_; ++i) {
      if (!is_masked(i)) available_.push_back(i);
    }
  }

  static MaskPattern none(std::size_t num_modalities) { return MaskPattern(num_modalities, {}); }

  static MaskPattern from_bits(std::size_t num_modalities, std::uint64_t bits) {
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < num_modalities; ++i)
      if (bits >> i & 1U) masked.push_back(i);
    return MaskPattern(num_modalities, std::move(masked));
  }

  std::size_t num_modalities() const noexcept { return num_modalities_; }
  const std::vector<std::size_t>& masked() const noexcept { return masked_; }
  const std::vector<std::size_t>& available() const noexcept { return available_; }
  bool is_masked(std::size_t i) const { return std::binary_search(masked_.begin(), masked_.end(), i); }
  bool is_available(std::size_t i) const { return i < num_modalities_ && !is_masked(i); }
  bool empty() const noexcept { return masked_.empty(); }

  std::uint64_t bits() const noexcept {
    std::uint64_t b = 0;
    for (auto i : masked_) b |= std::uint64_t{1} << i;
    return b;
  }

  friend bool operator==(const MaskPattern&, const MaskPattern&) = default;

 private:
  std::size_t num_modalities_ = 0;
  std::vector<std::size_t> masked_;
  std::vector<std::size_t> available_;
};

struct MaskSchedulerConfig {
  double p_none = 0.2;
  std::uint64_t seed = 0;
};

/// Draws a training-iteration mask. With probability p_none nothing is masked;
/// otherwise the masked set is uniform over the 2^M − 2 proper nonempty subsets.
inline MaskPattern sample_mask(Rng& rng, std::size_t num_modalities, const MaskSchedulerConfig& cfg) {
  if (num_modalities == 0) throw ContractError("sample_mask needs at least one modality");
  if (!(cfg.p_none >= 0.0 && cfg.p_none <= 1.0)) throw ValidationError("p_none must lie in [0, 1]");
  if (num_modalities > 62) throw ContractError("sample_mask supports at most 62 modalities");
  if (num_modalities == 1) return MaskPattern::none(1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < cfg.p_none) return MaskPattern::none(num_modalities);
  const std::uint64_t full = (std::uint64_t{1} << num_modalities) - 1;
  std::uniform_int_distribution<std::uint64_t> pick(1, full - 1);
  return MaskPattern::from_bits(num_modalities, pick(rng));
}

/// All 2^M − 1 admissible scenarios ordered by number masked, then
/// lexicographically by masked set. The first is the no-missing scenario.
inline std::vector<MaskPattern> enumerate_scenarios(std::size_t num_modalities) {
  if (num_modalities == 0) throw ContractError("enumerate_scenarios needs at least one modality");
  if (num_modalities > 20) throw ContractError("too many modalities to enumerate");
  std::vector<MaskPattern> out;
  const std::uint64_t full = (std::uint64_t{1} << num_modalities) - 1;
  for (std::uint64_t bits = 0; bits < full; ++bits) out.push_back(MaskPattern::from_bits(num_modalities, bits));
  std::sort(out.begin(), out.end(), [](const MaskPattern& a, const MaskPattern& b) {
    if (a.masked().size() != b.masked().size()) return a.masked().size() < b.masked().size();
    return a.masked() < b.masked();
  });
  return out;
}

/// "m0+m2 available": sorted available modality names joined by '+'.
inline std::string scenario_name(const MaskPattern& pattern, const std::vector<std::string>& names) {
  std::vector<std::string> avail;
  for (auto i : pattern.available()) avail.push_back(names.at(i));
  std::sort(avail.begin(), avail.end());
  std::string s;
  for (std::size_t k = 0; k < avail.size(); ++k) {
    if (k) s += '+';
    s += avail[k];
  }
  return s + " available";
}

}  // namespace mmp
