// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

namespace forge::tensor {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool nesterov = true;
};

/// One in-place SGD step on a flat parameter.
///
///   g' = g + wd * w          (only when apply_decay)
///   v  = momentum * v + g'
///   w -= lr * (g' + momentum * v)   (nesterov), lr * v otherwise
///
/// With a non-empty mask, inactive positions are forced to w = 0 and v = 0
/// and never move.
template <typename T>
void sgd_step(std::span<T> w, std::span<const T> grad, std::span<T> velocity,
              const SgdConfig& config, bool apply_decay,
              std::span<const std::uint8_t> mask = {});

/// lr_min + (lr_peak - lr_min) / 2 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_peak, double lr_min);

}  // namespace forge::tensor
