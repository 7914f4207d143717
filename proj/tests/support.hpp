// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Hand-rolled generators and brute-force oracles shared by the tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/rng.hpp"

namespace forge::testing {

/// Seeded value generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng_.bounded(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  /// Log-uniform integer, so small and large dims are both exercised.
  std::int64_t dim(std::int64_t lo, std::int64_t hi) {
    const double a = std::log(static_cast<double>(lo));
    const double b = std::log(static_cast<double>(hi) + 1.0);
    const auto v = static_cast<std::int64_t>(std::exp(a + (b - a) * rng_.uniform()));
    return std::clamp<std::int64_t>(v, lo, hi);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * rng_.uniform(); }
  double normal() { return rng_.normal(); }
  std::vector<double> normals(std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng_.normal();
    return v;
  }
  template <typename C>
  const auto& pick(const C& items) {
    return items[rng_.bounded(items.size())];
  }
  CounterRng& rng() { return rng_; }

 private:
  CounterRng rng_;
};

/// out[m x n] = x[m x k] * (w .* mask)[k x n], naive triple loop.
inline std::vector<double> naive_masked_product(const std::vector<double>& x,
                                                const std::vector<double>& w,
                                                const std::vector<std::uint8_t>& mask,
                                                std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        if (mask.empty() || mask[p * n + j]) acc += x[i * k + p] * w[p * n + j];
      }
      out[i * n + j] = acc;
    }
  }
  return out;
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, 1e-300);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("forge-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace forge::testing
