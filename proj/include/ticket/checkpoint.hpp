#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "ticket/adam.hpp"
#include "ticket/mask.hpp"
#include "ticket/params.hpp"

namespace ticket {

// Single-file checkpoint: "TCKT" magic, u32 LE format version, u64 LE
// manifest length, manifest JSON, raw payload. The manifest carries the run
// config, seeds, RNG stream states, and a named array index (name, kind,
// role, module, shape, offset); the payload holds parameters and optimizer
// moments as little-endian f32 and masks as packed bitsets (LSB first).
// An FNV-1a64 hash of the payload is stored in the manifest and checked on
// load. Save -> load -> save is byte-identical.
struct Checkpoint {
  nlohmann::json config;  // full experiment config
  std::string label;      // e.g. "dense", "round007", "ticket"
  int round = 0;
  int64_t step = 0;
  uint64_t seed = 0;
  std::map<std::string, std::array<uint64_t, 4>> rng_streams;

  ParameterSet params;
  MaskSet mask;
  AdamState adam;  // moment arrays aligned with params.entries

  bool has_adam = false;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

uint64_t fnv1a64_bytes(const uint8_t* data, size_t n);

}  // namespace ticket
