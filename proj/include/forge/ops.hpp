// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable operators recorded on a Tape.
//
// Matrices are row-major. Linear layers compute x[m x k] * W[k x n] (+ b),
// so a weight's rows are its fan-in. Every op that multiplies by a weight
// adds its forward MACs to the tape counter; sparse weights count only
// their active positions, whichever execution path runs them.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "forge/csr.hpp"
#include "forge/tensor.hpp"

namespace forge::tensor {

/// How the gradient of a masked weight is reported.
enum class WeightGrad {
  masked,  // zero at inactive positions
  dense,   // full dense gradient, used at mask-update steps
};

enum class Mode { train, eval };

/// c[m x n] += a[m x k] * b[k x n], fixed i-k-j accumulation order.
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// Adds bias[C] along axis 1 of x[B x C x ...].
template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var bias);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

/// x * (w .* mask) + bias. `mask` is a row-major 0/1 bitmap over w; an empty
/// span means fully dense.
template <typename T>
Var masked_linear(Tape<T>& tape, Var x, Var w, std::span<const std::uint8_t> mask,
                  Var bias = {}, WeightGrad grad_mode = WeightGrad::masked);

/// Same result as masked_linear, executed on compressed rows gathered from
/// the dense storage of w. The backward pass only touches stored entries
/// unless grad_mode is dense.
template <typename T>
Var csr_linear(Tape<T>& tape, Var x, Var w, std::shared_ptr<const CsrPattern> pattern,
               Var bias = {}, WeightGrad grad_mode = WeightGrad::masked);

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(std::size_t features = 0)
      : running_mean(features, T{0}), running_var(features, T{1}) {}
};

/// Per-feature normalization over axis 1 of x[B x C x ...]. Train mode uses
/// batch statistics (biased variance) and updates the running estimates
/// with the unbiased variance; eval mode uses the running estimates.
template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormState<T>& state, Mode mode,
              double eps = 1e-5, double momentum = 0.1);

/// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels);

/// Mean squared error over all elements.
template <typename T>
Var mse_loss(Tape<T>& tape, Var y, std::span<const T> target);

/// Sum of squares of all elements.
template <typename T>
Var sum_squares(Tape<T>& tape, Var x);

}  // namespace forge::tensor
