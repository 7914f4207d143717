// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration.
//
// A config is one JSON object. Unknown keys are errors at every level, and
// seeds have no defaults so every run is reproducible from its file alone.
// Relative paths resolve against the config file's directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "forge/mask.hpp"
#include "forge/network.hpp"
#include "forge/planner.hpp"

namespace forge::trainer {

enum class DatasetKind { synthetic_blobs, synthetic_teacher, idx_images, csv_table };
std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view text);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::synthetic_blobs;
  // Synthetic sets.
  std::int64_t classes = 10;
  std::int64_t features = 16;
  std::int64_t outputs = 1;
  std::int64_t hidden = 32;
  std::int64_t train_samples = 1000;
  std::int64_t test_samples = 200;
  double spread = 1.0;
  double noise = 0.0;
  // File-backed sets.
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  bool csv_header = false;
  /// Overrides the run's data seed when present.
  std::optional<std::uint64_t> seed;
};

struct OptimizerSpec {
  double lr_peak = 0.1;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
  std::int64_t epochs = 1;
  std::int64_t batch_size = 64;
};

struct Seeds {
  std::uint64_t model = 0;
  std::uint64_t mask = 0;
  std::uint64_t data = 0;
};

enum class FineTune { none, sparse, densify };
std::string_view to_string(FineTune mode);
FineTune parse_fine_tune(std::string_view text);

enum class Precision { f32, f64 };

struct TrainConfig {
  std::vector<planner::LayerSpec> layers;
  planner::Nonlinearity activation = planner::Nonlinearity::relu;
  planner::NetworkRequest request;
  bool redistribute = false;
  mask::MaskSchedule schedule;
  OptimizerSpec optimizer;
  DatasetSpec dataset;
  Seeds seeds;
  std::filesystem::path output_dir;
  FineTune fine_tune = FineTune::none;
  std::filesystem::path init_checkpoint;
  Precision precision = Precision::f32;
  network::ExecPath path = network::ExecPath::masked_dense;
  bool check_finite = false;
  bool write_checkpoints = true;
};

/// Parses and validates a config document. `base_dir` anchors relative
/// paths; referenced files must exist.
TrainConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
TrainConfig load_config(const std::filesystem::path& path);

DatasetSpec parse_dataset_spec(const nlohmann::json& j, const std::filesystem::path& base_dir,
                               const std::string& where = "dataset");

/// Reads a JSON file. Syntax errors become ValidationError with the line,
/// column and text of the offending line.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Canonical JSON form of a config (defaults filled in).
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const DatasetSpec& spec);

}  // namespace forge::trainer
