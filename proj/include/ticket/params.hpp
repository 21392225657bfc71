#pragma once

#include <string>
#include <vector>

#include "ticket/tensor.hpp"

namespace ticket {

enum class ParamRole : uint8_t { PrunableWeight, Bias, Embedding };

inline const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::PrunableWeight: return "weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::Embedding: return "embedding";
  }
  return "?";
}

struct ParamEntry {
  int module = -1;  // pruning-module index j for prunable weights, else -1
  std::string name;
  ParamRole role = ParamRole::Bias;
  Tensor value;
};

// Ordered, named collection of trainable arrays. Entry order is fixed at
// construction and stable across save/load and pruning rounds; prunable
// weights carry consecutive module indices 0..J-1 in forward-pass order.
struct ParameterSet {
  std::vector<ParamEntry> entries;

  int module_count() const {
    int j = -1;
    for (const auto& e : entries) j = std::max(j, e.module);
    return j + 1;
  }
  // entry index of the prunable weight of module j
  int prunable_entry(int module) const {
    for (size_t i = 0; i < entries.size(); ++i)
      if (entries[i].module == module &&
          entries[i].role == ParamRole::PrunableWeight)
        return static_cast<int>(i);
    throw std::out_of_range("module index " + std::to_string(module) +
                            " out of range (J=" + std::to_string(module_count()) +
                            ")");
  }
  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.numel();
    return n;
  }
  int64_t prunable_count() const {
    int64_t n = 0;
    for (const auto& e : entries)
      if (e.role == ParamRole::PrunableWeight) n += e.value.numel();
    return n;
  }
  const ParamEntry& by_name(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw std::out_of_range("no parameter named " + name);
  }
};

}  // namespace ticket
