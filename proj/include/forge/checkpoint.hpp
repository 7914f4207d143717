// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint files.
//
// Layout, all integers little-endian:
//
//   "SIFT"  u32 version  u32 record_count
//   record: u8 type  u32 name_len  name
//     tensor (1): u32 ndim  u64 dims[ndim]  f32 values[prod(dims)]
//     mask   (2): u32 ndim  u64 dims[ndim]  u64 seed  u64 count  u32 indices[count]
//                 u64 log_len  i64 (step, dropped, grown, shortfall)[log_len]
//     meta   (3): u64 len  JSON text

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "forge/mask.hpp"
#include "forge/network.hpp"

namespace forge::trainer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

struct MaskRecord {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> indices;
  std::vector<mask::UpdateRecord> log;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<TensorRecord> tensors;
  std::vector<MaskRecord> masks;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws FormatError on a bad magic, unsupported version, truncated or
/// trailing data, or mask indices that are not strictly increasing.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters, normalization statistics and masks of a network. `meta`
/// should describe how to rebuild it (see trainer.hpp).
template <typename T>
Checkpoint snapshot(const network::Network<T>& net, nlohmann::json meta);

/// Overwrites parameters, statistics and masks from a checkpoint whose
/// records match the network's names and shapes.
template <typename T>
void restore(network::Network<T>& net, const Checkpoint& checkpoint);

}  // namespace forge::trainer
