// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Sparse mask lifecycle: initialization, drop/grow updates, densification.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "forge/rng.hpp"

namespace forge::mask {

enum class Method { fixed, set, rigl };

std::string_view to_string(Method method);
/// Accepts "static", "set" and "rigl".
Method parse_method(std::string_view text);

struct MaskSchedule {
  Method method = Method::fixed;
  double alpha = 0.3;
  std::int64_t delta_t = 100;
  double anneal_end_fraction = 0.75;
  std::int64_t total_steps = 0;

  /// Throws ValidationError unless 0 < alpha < 1, delta_t >= 1,
  /// 0 < anneal_end_fraction <= 1 and total_steps >= 0.
  void validate() const;
  /// T_a, the step at which the drop fraction reaches zero.
  double anneal_end() const { return anneal_end_fraction * static_cast<double>(total_steps); }
};

/// alpha/2 * (1 + cos(pi * step / T_a)) before T_a, 0 from T_a on.
double drop_fraction(const MaskSchedule& schedule, std::int64_t step);

/// True when a mask update follows optimizer step `step` (1-based): step is
/// a multiple of delta_t and lies before T_a. Always false for static masks.
bool update_due(const MaskSchedule& schedule, std::int64_t step);

/// Number of updates a full run performs.
std::int64_t count_updates(const MaskSchedule& schedule);

struct UpdateRecord {
  std::int64_t step = 0;
  std::int64_t dropped = 0;
  std::int64_t grown = 0;
  /// Drops skipped because too few inactive positions could be grown.
  std::int64_t shortfall = 0;

  bool operator==(const UpdateRecord&) const = default;
};

class SparseMask {
 public:
  SparseMask() = default;
  /// `active` must be sorted, unique and below `positions`.
  SparseMask(std::vector<std::size_t> shape, std::vector<std::uint32_t> active,
             std::uint64_t seed);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t positions() const { return bitmap_.size(); }
  std::span<const std::uint32_t> active() const { return active_; }
  std::size_t active_count() const { return active_.size(); }
  std::int64_t target_active() const { return target_active_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<UpdateRecord>& log() const { return log_; }
  /// Row-major 0/1 view over all positions.
  std::span<const std::uint8_t> bitmap() const { return bitmap_; }
  bool is_active(std::size_t index) const { return bitmap_.at(index) != 0; }
  bool dense() const { return active_.size() == bitmap_.size(); }
  /// Changes whenever the active set changes; unique across all masks.
  std::uint64_t version() const { return version_; }

  /// Replaces the active set; validates as the constructor does. The target
  /// becomes the new active count.
  void assign(std::vector<std::uint32_t> active);
  void record(const UpdateRecord& entry) { log_.push_back(entry); }
  void set_log(std::vector<UpdateRecord> log) { log_ = std::move(log); }

  /// Zeroes w at inactive positions.
  template <typename T>
  void apply(std::span<T> w) const;

  bool operator==(const SparseMask& other) const {
    return shape_ == other.shape_ && active_ == other.active_ &&
           target_active_ == other.target_active_ && seed_ == other.seed_ && log_ == other.log_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<std::uint32_t> active_;
  std::int64_t target_active_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<UpdateRecord> log_;
  std::vector<std::uint8_t> bitmap_;
  std::uint64_t version_ = 0;
};

/// round((1 - s) * N) positions drawn uniformly without replacement from the
/// counter stream keyed by `seed`.
SparseMask init_mask(std::vector<std::size_t> shape, double sparsity, std::uint64_t seed);

/// As init_mask with an exact active count, as planned layers prescribe.
SparseMask init_mask_with_count(std::vector<std::size_t> shape, std::size_t active,
                                std::uint64_t seed);

struct UpdateResult {
  std::vector<std::uint32_t> dropped;
  std::vector<std::uint32_t> grown;
  std::int64_t shortfall = 0;
};

/// Drops floor(f * target) active positions of smallest |w| and grows as
/// many positions of largest |grad| among those inactive before the update.
/// Ties go to the lowest index. Dropped and grown weights are zeroed, and so
/// is their momentum when a buffer is given.
template <typename T>
UpdateResult rigl_update(SparseMask& mask, std::span<T> weights, std::span<const T> dense_grad,
                         double fraction, std::int64_t step, std::span<T> momentum = {});

/// As rigl_update, growing uniformly at random.
template <typename T>
UpdateResult set_update(SparseMask& mask, std::span<T> weights, double fraction,
                        CounterRng& rng, std::int64_t step, std::span<T> momentum = {});

/// Activates every position.
void densify(SparseMask& mask);

}  // namespace forge::mask
