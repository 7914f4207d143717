// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Microbenchmarks of Sparse Wide layers: the widened layer run dense, run
// with a multiplicative mask, and run on compressed rows.

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace forge::bench {

struct BenchCase {
  std::int64_t d_in = 1024;
  std::int64_t d_out = 1024;
  std::int64_t batch = 64;
  std::vector<double> sparsities = {0.0, 0.5, 0.75, 0.9};
  /// Only sparse_wide is supported: it is the transform whose widened shape
  /// grows while the compressed cost stays fixed.
  std::string transform = "sparse_wide";
  std::int64_t repetitions = 10;
  std::int64_t warmup = 2;
  /// Time forward plus backward instead of forward alone.
  bool training = false;
  std::uint64_t seed = 0;

  /// Throws ValidationError unless repetitions >= 10, warmup >= 0, dims and
  /// batch are positive and every sparsity lies in [0, 1).
  void validate() const;
};

BenchCase parse_bench_case(const nlohmann::json& j);
BenchCase load_bench_case(const std::filesystem::path& path);

struct BenchRow {
  double sparsity = 0.0;
  double effective_sparsity = 0.0;
  std::int64_t wide_in = 0;
  std::int64_t wide_out = 0;
  std::int64_t active = 0;
  std::int64_t positions = 0;
  /// Forward MACs counted by the engine for one call of each path.
  std::int64_t dense_widened_macs = 0;
  std::int64_t masked_dense_macs = 0;
  std::int64_t compressed_macs = 0;
  /// Medians over the timed repetitions.
  double dense_widened_ns = 0.0;
  double masked_dense_ns = 0.0;
  double compressed_ns = 0.0;

  double speedup() const { return dense_widened_ns / compressed_ns; }
  /// dense_widened_macs / compressed_macs == positions / active, compared as
  /// integers so the check is exact.
  bool mac_ratio_exact() const { return dense_widened_macs * active == compressed_macs * positions; }
  double compressed_macs_per_ns() const { return static_cast<double>(compressed_macs) / compressed_ns; }
};

struct BenchResult {
  BenchCase config;
  int threads = 1;
  std::vector<BenchRow> rows;
};

BenchResult bench_spmm(const BenchCase& config);

inline constexpr const char* kBenchHeader =
    "sparsity,dense_widened_ns,masked_dense_ns,compressed_ns,speedup";

/// CSV with kBenchHeader columns.
std::string bench_csv(const BenchResult& result);
nlohmann::json bench_json(const BenchResult& result);
/// Writes bench.csv and bench.json into `dir`.
void emit_bench_table(const BenchResult& result, const std::filesystem::path& dir);

}  // namespace forge::bench
