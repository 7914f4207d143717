// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <string>

#include "forge/error.hpp"
#include "forge/mask.hpp"

namespace forge::mask {

namespace {

template <typename T>
void check_sizes(const SparseMask& mask, std::span<T> weights, std::span<T> momentum,
                 double fraction) {
  if (weights.size() != mask.positions()) throw ShapeError("weights do not match the mask");
  if (!momentum.empty() && momentum.size() != mask.positions()) {
    throw ShapeError("momentum buffer does not match the mask");
  }
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ValidationError("drop fraction must lie in [0, 1), got " + std::to_string(fraction));
  }
}

// Indices of the k active positions of smallest |w|, lowest index first on
// ties.
template <typename T>
std::vector<std::uint32_t> smallest_active(const SparseMask& mask, std::span<const T> w,
                                           std::size_t k) {
  std::vector<std::uint32_t> order(mask.active().begin(), mask.active().end());
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    const T wa = std::abs(w[a]), wb = std::abs(w[b]);
    return wa < wb || (wa == wb && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    less);
  order.resize(k);
  return order;
}

std::vector<std::uint32_t> inactive_positions(const SparseMask& mask) {
  std::vector<std::uint32_t> out;
  out.reserve(mask.positions() - mask.active_count());
  auto bits = mask.bitmap();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

// Drops and grows, zeroing weights and momentum at both sets, and logs.
template <typename T>
UpdateResult apply_swap(SparseMask& mask, std::span<T> weights, std::span<T> momentum,
                        std::vector<std::uint32_t> dropped, std::vector<std::uint32_t> grown,
                        std::int64_t shortfall, std::int64_t step) {
  std::vector<std::uint8_t> bits(mask.bitmap().begin(), mask.bitmap().end());
  for (auto i : dropped) bits[i] = 0;
  for (auto i : grown) bits[i] = 1;
  for (auto i : dropped) weights[i] = T{0};
  for (auto i : grown) weights[i] = T{0};
  if (!momentum.empty()) {
    for (auto i : dropped) momentum[i] = T{0};
    for (auto i : grown) momentum[i] = T{0};
  }
  std::vector<std::uint32_t> active;
  active.reserve(mask.active_count());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) active.push_back(static_cast<std::uint32_t>(i));
  }
  if (!dropped.empty()) mask.assign(std::move(active));
  std::sort(dropped.begin(), dropped.end());
  std::sort(grown.begin(), grown.end());
  mask.record({step, static_cast<std::int64_t>(dropped.size()),
               static_cast<std::int64_t>(grown.size()), shortfall});
  return {std::move(dropped), std::move(grown), shortfall};
}

// k = floor(f * target) capped by the number of grow candidates.
std::size_t swap_count(const SparseMask& mask, double fraction, std::size_t candidates,
                       std::int64_t& shortfall) {
  const auto wanted = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(mask.target_active())));
  const std::size_t k = std::min(wanted, candidates);
  shortfall = static_cast<std::int64_t>(wanted - k);
  return k;
}

}  // namespace

template <typename T>
UpdateResult rigl_update(SparseMask& mask, std::span<T> weights, std::span<const T> dense_grad,
                         double fraction, std::int64_t step, std::span<T> momentum) {
  check_sizes(mask, weights, momentum, fraction);
  if (dense_grad.size() != mask.positions()) {
    throw ShapeError("dense gradient does not cover every mask position");
  }
  auto candidates = inactive_positions(mask);
  std::int64_t shortfall = 0;
  const std::size_t k = swap_count(mask, fraction, candidates.size(), shortfall);
  auto dropped = smallest_active<T>(mask, weights, k);
  auto greater = [&](std::uint32_t a, std::uint32_t b) {
    const T ga = std::abs(dense_grad[a]), gb = std::abs(dense_grad[b]);
    return ga > gb || (ga == gb && a < b);
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), greater);
  candidates.resize(k);
  return apply_swap(mask, weights, momentum, std::move(dropped), std::move(candidates),
                    shortfall, step);
}

template <typename T>
UpdateResult set_update(SparseMask& mask, std::span<T> weights, double fraction,
                        CounterRng& rng, std::int64_t step, std::span<T> momentum) {
  check_sizes(mask, weights, momentum, fraction);
  auto candidates = inactive_positions(mask);
  std::int64_t shortfall = 0;
  const std::size_t k = swap_count(mask, fraction, candidates.size(), shortfall);
  auto dropped = smallest_active<T>(mask, weights, k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.bounded(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  return apply_swap(mask, weights, momentum, std::move(dropped), std::move(candidates),
                    shortfall, step);
}

template UpdateResult rigl_update<float>(SparseMask&, std::span<float>, std::span<const float>,
                                         double, std::int64_t, std::span<float>);
template UpdateResult rigl_update<double>(SparseMask&, std::span<double>,
                                          std::span<const double>, double, std::int64_t,
                                          std::span<double>);
template UpdateResult set_update<float>(SparseMask&, std::span<float>, double, CounterRng&,
                                        std::int64_t, std::span<float>);
template UpdateResult set_update<double>(SparseMask&, std::span<double>, double, CounterRng&,
                                         std::int64_t, std::span<double>);

}  // namespace forge::mask
