#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ticket/params.hpp"

namespace ticket {

// Binary mask for one prunable array; byte-per-element in memory (packed to
// bits only inside checkpoints).
struct MaskEntry {
  int module = -1;
  std::string name;
  std::vector<int64_t> shape;
  std::vector<uint8_t> bits;  // values 0 or 1

  int64_t ones() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  int64_t size() const { return static_cast<int64_t>(bits.size()); }
};

// Masks aligned one-to-one with the prunable entries of a ParameterSet, in
// the same module order. Mask values only ever move 1 -> 0.
struct MaskSet {
  std::vector<MaskEntry> entries;

  static MaskSet ones_like(const ParameterSet& params) {
    MaskSet m;
    for (const auto& e : params.entries) {
      if (e.role != ParamRole::PrunableWeight) continue;
      MaskEntry me;
      me.module = e.module;
      me.name = e.name;
      me.shape = e.value.shape;
      me.bits.assign(static_cast<size_t>(e.value.numel()), 1);
      m.entries.push_back(std::move(me));
    }
    return m;
  }

  int64_t ones() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.ones();
    return n;
  }
  int64_t size() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.size();
    return n;
  }
  const MaskEntry& by_module(int module) const {
    for (const auto& e : entries)
      if (e.module == module) return e;
    throw std::out_of_range("no mask for module " + std::to_string(module));
  }
  MaskEntry& by_module(int module) {
    for (auto& e : entries)
      if (e.module == module) return e;
    throw std::out_of_range("no mask for module " + std::to_string(module));
  }
};

// Throws if the mask does not align entry-for-entry with params' prunable
// arrays (names, order and sizes).
void check_aligned(const ParameterSet& params, const MaskSet& mask);

}  // namespace ticket
