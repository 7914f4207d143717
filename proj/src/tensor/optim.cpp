// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "forge/error.hpp"

namespace forge::tensor {

template <typename T>
void sgd_step(std::span<T> w, std::span<const T> grad, std::span<T> velocity,
              const SgdConfig& config, bool apply_decay, std::span<const std::uint8_t> mask) {
  if (grad.size() != w.size() || velocity.size() != w.size() ||
      (!mask.empty() && mask.size() != w.size())) {
    throw ShapeError("sgd_step: parameter, gradient, velocity and mask sizes differ");
  }
  const T lr = static_cast<T>(config.lr);
  const T mom = static_cast<T>(config.momentum);
  const T wd = apply_decay ? static_cast<T>(config.weight_decay) : T{0};
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!mask.empty() && !mask[i]) {
      w[i] = T{0};
      velocity[i] = T{0};
      continue;
    }
    const T g = grad[i] + wd * w[i];
    velocity[i] = mom * velocity[i] + g;
    const T update = config.nesterov ? g + mom * velocity[i] : velocity[i];
    w[i] -= lr * update;
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_peak, double lr_min) {
  if (total_steps <= 0) throw ValidationError("cosine_lr: total_steps must be positive");
  const double t = static_cast<double>(std::clamp<std::int64_t>(step, 0, total_steps));
  return lr_min + 0.5 * (lr_peak - lr_min) *
                      (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_steps)));
}

template void sgd_step<float>(std::span<float>, std::span<const float>, std::span<float>,
                              const SgdConfig&, bool, std::span<const std::uint8_t>);
template void sgd_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                               const SgdConfig&, bool, std::span<const std::uint8_t>);

}  // namespace forge::tensor
