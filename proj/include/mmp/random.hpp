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

#include <cstdint>
#include <random>
#include <string_view>

namespace mmp {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for an independent stream identified by `label` under a root seed.
/// Streams with different labels never share state, so adding a new consumer
/// (e.g. an extra parameter) does not shift the draws of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept {
  return mix64(root ^ mix64(fnv1a64(label)));
}

inline Rng make_rng(std::uint64_t root, std::string_view label) { return Rng(derive_seed(root, label)); }

}  // namespace mmp
