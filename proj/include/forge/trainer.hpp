// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Training and evaluation loops.

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "forge/checkpoint.hpp"
#include "forge/config.hpp"
#include "forge/dataset.hpp"
#include "forge/network.hpp"

namespace forge::trainer {

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double drop_fraction = 0.0;
  /// Forward MACs of this step and the running total since step 1.
  std::int64_t macs = 0;
  std::int64_t cumulative_macs = 0;
};

struct EvalResult {
  double loss = 0.0;
  /// Top-1 accuracy in [0, 1] for classification, MSE for regression.
  double metric = 0.0;
  bool classification = true;
  std::int64_t samples = 0;

  bool operator==(const EvalResult&) const = default;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's steps
  EvalResult test;
  std::int64_t cumulative_macs = 0;
};

struct MaskEvent {
  std::int64_t step = 0;
  std::string mask;
  double fraction = 0.0;
  std::int64_t dropped = 0;
  std::int64_t grown = 0;
  std::int64_t shortfall = 0;
};

struct LayerAudit {
  std::int64_t index = 0;
  std::string transform;
  std::int64_t dense_macs = 0;
  std::int64_t planned_macs = 0;
  /// Forward MACs per sample observed on the first training step.
  std::int64_t measured_macs = 0;
  std::int64_t cardinality = 0;
  std::int64_t active_weights = 0;
  std::int64_t positions = 0;
};

struct RunReport {
  nlohmann::json config;
  nlohmann::json plan;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::vector<MaskEvent> mask_events;
  std::vector<LayerAudit> layers;

  std::int64_t total_steps = 0;
  std::int64_t baseline_macs = 0;  // per sample, untransformed network
  std::int64_t planned_macs = 0;   // per sample, as planned
  std::int64_t measured_macs = 0;  // per sample, first step
  std::int64_t cumulative_macs = 0;
  /// Backward cost is not audited; reported as twice the forward total.
  std::int64_t backward_macs_estimate = 0;
  std::int64_t total_cardinality = 0;

  std::int64_t active_params = 0;
  std::int64_t total_params = 0;
  double initial_train_loss = 0.0;  // full train split, before step 1
  double final_train_loss = 0.0;    // full train split, after the last step
  EvalResult final_test;

  std::vector<mask::SparseMask> initial_masks;
  std::vector<mask::SparseMask> final_masks;
  std::vector<std::string> mask_names;
  std::int64_t mask_updates = 0;  // schedule points at which masks changed

  std::filesystem::path final_checkpoint;
  int threads = 1;
};

/// Plans, builds and trains the network described by `config`, writing
/// checkpoints when `config.write_checkpoints` and an output directory are
/// set. Throws NumericError naming the step on a non-finite loss.
RunReport train(const TrainConfig& config);

/// As train() on an already loaded dataset.
RunReport train(const TrainConfig& config, const Dataset& data);

/// Mean loss and metric over a split in eval mode, batches in order.
template <typename T>
EvalResult evaluate(network::Network<T>& net, const Split& split, std::int64_t batch_size);

/// Rebuilds the network stored in a checkpoint and evaluates it.
EvalResult evaluate_checkpoint(const Checkpoint& checkpoint, const Split& split);

/// Network stored in a checkpoint, at its recorded precision cast to T.
template <typename T>
network::Network<T> rebuild(const Checkpoint& checkpoint);

/// Threads requested through FORGE_THREADS (default 1). Kernels are
/// single-threaded, so values above 1 only label reports.
int requested_threads();

}  // namespace forge::trainer
