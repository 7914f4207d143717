// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "forge/error.hpp"
#include "forge/mask.hpp"

namespace forge::mask {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::fixed: return "static";
    case Method::set: return "set";
    case Method::rigl: return "rigl";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "static") return Method::fixed;
  if (text == "set") return Method::set;
  if (text == "rigl") return Method::rigl;
  throw ValidationError("unknown mask method '" + std::string(text) +
                        "' (expected static, set or rigl)");
}

void MaskSchedule::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("mask.alpha must lie in (0, 1)");
  if (delta_t < 1) throw ValidationError("mask.delta_t must be at least 1");
  if (!(anneal_end_fraction > 0.0 && anneal_end_fraction <= 1.0)) {
    throw ValidationError("mask.anneal_end_fraction must lie in (0, 1]");
  }
  if (total_steps < 0) throw ValidationError("mask schedule total_steps must be >= 0");
}

double drop_fraction(const MaskSchedule& schedule, std::int64_t step) {
  const double t_a = schedule.anneal_end();
  const double t = static_cast<double>(step);
  if (t_a <= 0.0 || t >= t_a) return 0.0;
  return schedule.alpha / 2.0 * (1.0 + std::cos(std::numbers::pi * t / t_a));
}

bool update_due(const MaskSchedule& schedule, std::int64_t step) {
  if (schedule.method == Method::fixed || step <= 0) return false;
  return step % schedule.delta_t == 0 && static_cast<double>(step) < schedule.anneal_end();
}

std::int64_t count_updates(const MaskSchedule& schedule) {
  std::int64_t n = 0;
  for (std::int64_t step = 1; step <= schedule.total_steps; ++step) n += update_due(schedule, step);
  return n;
}

SparseMask::SparseMask(std::vector<std::size_t> shape, std::vector<std::uint32_t> active,
                       std::uint64_t seed)
    : shape_(std::move(shape)), seed_(seed) {
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("mask has more positions than 32-bit indices can address");
  }
  bitmap_.assign(n, 0);
  assign(std::move(active));
}

void SparseMask::assign(std::vector<std::uint32_t> active) {
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i] >= bitmap_.size()) {
      throw ValidationError("mask index " + std::to_string(active[i]) + " out of range " +
                            std::to_string(bitmap_.size()));
    }
    if (i > 0 && active[i] <= active[i - 1]) {
      throw ValidationError("mask indices must be sorted and unique");
    }
  }
  std::fill(bitmap_.begin(), bitmap_.end(), 0);
  for (auto i : active) bitmap_[i] = 1;
  active_ = std::move(active);
  target_active_ = static_cast<std::int64_t>(active_.size());
  // Stamps are unique across masks, so a replaced mask never looks current
  // to a cache keyed on the old one.
  static std::atomic<std::uint64_t> stamps{0};
  version_ = ++stamps;
}

template <typename T>
void SparseMask::apply(std::span<T> w) const {
  if (w.size() != bitmap_.size()) throw ShapeError("mask does not match weight size");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!bitmap_[i]) w[i] = T{0};
  }
}

template void SparseMask::apply<float>(std::span<float>) const;
template void SparseMask::apply<double>(std::span<double>) const;

SparseMask init_mask_with_count(std::vector<std::size_t> shape, std::size_t active,
                                std::uint64_t seed) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (active > n) {
    throw ValidationError("cannot activate " + std::to_string(active) + " of " +
                          std::to_string(n) + " positions");
  }
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  CounterRng rng(seed);
  // Partial Fisher-Yates: the first `active` slots are a uniform sample.
  for (std::size_t i = 0; i < active; ++i) {
    const std::size_t j = i + rng.bounded(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(active);
  std::sort(pool.begin(), pool.end());
  return SparseMask(std::move(shape), std::move(pool), seed);
}

SparseMask init_mask(std::vector<std::size_t> shape, double sparsity, std::uint64_t seed) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw ValidationError("mask sparsity must lie in [0, 1), got " + std::to_string(sparsity));
  }
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  const auto target = static_cast<std::size_t>(std::floor((1.0 - sparsity) * n + 0.5));
  return init_mask_with_count(std::move(shape), target, seed);
}

void densify(SparseMask& mask) {
  if (mask.dense()) return;
  std::vector<std::uint32_t> all(mask.positions());
  std::iota(all.begin(), all.end(), 0u);
  mask.assign(std::move(all));
}

}  // namespace forge::mask
