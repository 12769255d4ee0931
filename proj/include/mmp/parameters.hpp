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
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmp/binary_io.hpp"
#include "mmp/errors.hpp"
#include "mmp/tensor.hpp"

namespace mmp {

/// Named learnable tensors with a gradient slot each.
///
/// Iteration follows insertion order, so two stores built by the same
/// sequence of `add` calls enumerate identically.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  static constexpr char kMagic[4] = {'M', 'M', 'P', 'C'};
  static constexpr std::uint16_t kVersion = 1;

  Tensor& add(std::string name, Tensor init, bool trainable = true) {
    if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    Tensor grad(init.shape());
    entries_.push_back(Entry{std::move(name), std::move(init), std::move(grad), trainable});
    return entries_.back().value;
  }

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Entry& entry(std::string_view name) { return entries_[index_of(name)]; }
  const Entry& entry(std::string_view name) const { return entries_[index_of(name)]; }

  Tensor& value(std::string_view name) { return entry(name).value; }
  const Tensor& value(std::string_view name) const { return entry(name).value; }
  const Tensor& grad(std::string_view name) const { return entry(name).grad; }

  void set_trainable(std::string_view name, bool trainable) { entry(name).trainable = trainable; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_scalars() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  /// Checkpoint encoding: magic "MMPC", u16 version, then per entry
  /// u32 name length, name bytes, u8 rank, u64 extents, raw f64 payload.
  /// Entries run to end of file.
  std::vector<std::uint8_t> serialize() const {
    io::ByteWriter w;
    w.put_string(std::string_view(kMagic, 4));
    w.put<std::uint16_t>(kVersion);
    for (const auto& e : entries_) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
      w.put_string(e.name);
      w.put<std::uint8_t>(static_cast<std::uint8_t>(e.value.rank()));
      for (auto ext : e.value.shape()) w.put<std::uint64_t>(ext);
      for (double v : e.value.data()) w.put<double>(v);
    }
    return std::move(w.bytes());
  }

  static ParameterStore deserialize(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    if (r.get_string(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("bad checkpoint magic", 0);
    const std::size_t version_at = r.offset();
    if (auto v = r.get<std::uint16_t>("version"); v != kVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
    }
    ParameterStore store;
    while (!r.at_end()) {
      const std::size_t entry_at = r.offset();
      const auto len = r.get<std::uint32_t>("name length");
      std::string name = r.get_string(len, "name");
      const auto rank = r.get<std::uint8_t>("rank");
      if (rank > 3) throw FormatError("rank " + std::to_string(rank) + " exceeds 3", r.offset() - 1);
      Shape shape(rank);
      for (auto& ext : shape) ext = r.get<std::uint64_t>("extent");
      const std::size_t n = shape_size(shape);
      if (n > r.remaining() / 8) throw FormatError("truncated payload for '" + name + "'", r.offset());
      std::vector<double> data(n);
      for (auto& v : data) v = r.get<double>("payload");
      if (store.contains(name)) throw FormatError("duplicate entry '" + name + "'", entry_at);
      store.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return store;
  }

  void save(const std::string& path) const { io::write_file(path, serialize()); }
  static ParameterStore load(const std::string& path) { return deserialize(io::read_file(path)); }

  /// Copies values from `other` for every name present in both; shapes must match.
  void assign_values(const ParameterStore& other) {
    for (const auto& e : other) {
      if (!contains(e.name)) continue;
      auto& mine = entry(e.name);
      if (mine.value.shape() != e.value.shape()) {
        throw DimensionError("parameter '" + e.name + "' shape " + shape_str(mine.value.shape()) +
                             " vs checkpoint " + shape_str(e.value.shape()));
      }
      mine.value = e.value;
    }
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mmp
