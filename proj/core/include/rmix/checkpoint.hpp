// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rmix/tensor.hpp"

namespace rmix {

/// Resumable training state.
///
/// Binary layout (all integers little-endian, doubles as IEEE-754 bit
/// patterns; "str" is a u64 byte length followed by the bytes):
///
///   magic     8 bytes "RMIXCKPT"
///   version   u32 (currently 1)
///   config    str, canonical config text
///   epoch     u64, completed epochs
///   step      u64, optimizer steps taken
///   groups    u32 count, then per group: name str, u32 tensor count, then per
///             tensor: u32 rank, rank x u64 extents, extents-product x f64
///   rng       u32 count, then per entry: name str, state str
///   scalars   u32 count, then per entry: name str, f64
///   counters  u32 count, then per entry: name str, u64
///   checksum  u64 FNV-1a over every preceding byte
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<Tensor>> groups;
  std::map<std::string, std::string> rng_states;
  std::map<std::string, double> scalars;
  std::map<std::string, std::uint64_t> counters;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws ParseError (with byte offset) on bad magic, unknown version,
/// truncation, trailing bytes or a checksum mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place, so an
/// interrupted save never leaves a torn file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace rmix
