// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "forge/config.hpp"

namespace forge::trainer {

/// Row-major samples. Classification splits carry labels; regression splits
/// carry `outputs` targets per sample.
struct Split {
  std::int64_t samples = 0;
  std::int64_t features = 0;
  std::vector<float> x;
  bool classification = true;
  std::int64_t classes = 0;
  std::vector<std::int32_t> labels;
  std::int64_t outputs = 0;
  std::vector<float> targets;
};

struct Dataset {
  Split train;
  Split test;
};

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t data_seed);

/// Gaussian clusters around random unit-scale centers.
Dataset make_blobs(std::int64_t classes, std::int64_t features, std::int64_t train_samples,
                   std::int64_t test_samples, double spread, std::uint64_t seed);

/// Targets of a frozen random tanh network plus Gaussian noise.
Dataset make_teacher(std::int64_t features, std::int64_t hidden, std::int64_t outputs,
                     std::int64_t train_samples, std::int64_t test_samples, double noise,
                     std::uint64_t seed);

/// Contents of an IDX file: big-endian dimensions, unsigned-byte payload.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// Images normalized to [0, 1] with labels checked against `classes`.
Split idx_split(const IdxArray& images, const IdxArray& labels, std::int64_t classes);

/// Every row holds `features` values followed by an integer label.
Split read_csv(const std::filesystem::path& path, std::int64_t features, std::int64_t classes,
               bool header);

}  // namespace forge::trainer
