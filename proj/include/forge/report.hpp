// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Run reports: metrics CSV, JSON summary, iso-FLOP audit table, SVG chart.

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "forge/config.hpp"
#include "forge/trainer.hpp"

namespace forge::trainer {

/// One network-level row of the audit: a transform planned on the config's
/// layers at the config's sparsity, compared with the dense baseline.
struct AuditRow {
  std::string transform;
  double sparsity = 0.0;
  /// Uniform sparsity after network-level re-solving, when applied.
  std::optional<double> redistributed_sparsity;
  std::int64_t baseline_macs = 0;
  std::int64_t planned_macs = 0;
  double relative_error = 0.0;
  std::int64_t total_cardinality = 0;
  std::int64_t parameters = 0;  // active weights over all slots
  /// Empty when planning succeeded, otherwise the reason it did not.
  std::string note;
};

/// Dense plus every sparse transform. Sparse Wide rows are always re-solved
/// network-wide, since widening the hidden layers also grows the dense
/// boundary layers; other transforms follow `config.redistribute`.
std::vector<AuditRow> audit_transforms(const TrainConfig& config);

inline constexpr const char* kMetricsHeader = "step,loss,lr,macs";
inline constexpr const char* kAuditHeader =
    "transform,sparsity,redistributed_sparsity,baseline_macs,planned_macs,relative_error,"
    "total_cardinality,parameters,note";

void write_metrics_csv(const RunReport& run, const std::filesystem::path& path);
void write_audit_csv(const std::vector<AuditRow>& rows, const std::filesystem::path& path);
nlohmann::json summary_json(const RunReport& run);
/// Training loss and test metric against cumulative forward MACs.
void write_chart_svg(const RunReport& run, const std::filesystem::path& path);

/// Writes metrics.csv, summary.json, audit.csv and curves.svg into `dir`.
/// Throws Error when the directory cannot be created or written.
void emit_report(const RunReport& run, const TrainConfig& config, const std::filesystem::path& dir);

}  // namespace forge::trainer
