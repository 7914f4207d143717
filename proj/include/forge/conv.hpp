// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// 2-D convolution lowered to a patch matrix.
//
// Activations are NCHW. A conv weight is stored as a matrix with one row per
// (input channel, ky, kx) and one column per output channel, so the masked
// and compressed linear ops apply unchanged to the patch matrix.

#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "forge/csr.hpp"
#include "forge/ops.hpp"
#include "forge/tensor.hpp"

namespace forge::tensor {

struct ConvGeometry {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Output extent for an input extent; throws ShapeError when the window
  /// does not fit.
  std::size_t out_extent(std::size_t in, std::size_t kernel) const;
};

/// x[B x C x H x W] -> patches[(B*OH*OW) x (C*kh*kw)].
template <typename T>
Var im2col(Tape<T>& tape, Var x, const ConvGeometry& geo);

/// rows[(B*OH*OW) x C] -> [B x C x OH x OW].
template <typename T>
Var rows_to_nchw(Tape<T>& tape, Var rows, std::size_t batch, std::size_t out_h,
                 std::size_t out_w);

/// Convolution with a masked weight[(C*kh*kw) x C_out]; empty mask = dense.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, const ConvGeometry& geo,
           std::span<const std::uint8_t> mask = {}, Var bias = {},
           WeightGrad grad_mode = WeightGrad::masked);

/// Same as conv2d, executed on compressed rows.
template <typename T>
Var conv2d_csr(Tape<T>& tape, Var x, Var w, const ConvGeometry& geo,
               std::shared_ptr<const CsrPattern> pattern, Var bias = {},
               WeightGrad grad_mode = WeightGrad::masked);

/// Per-channel convolution, weight[C x (kh*kw)]. Only active positions are
/// counted as MACs.
template <typename T>
Var depthwise_conv2d(Tape<T>& tape, Var x, Var w, const ConvGeometry& geo,
                     std::span<const std::uint8_t> mask = {}, Var bias = {},
                     WeightGrad grad_mode = WeightGrad::masked);

}  // namespace forge::tensor
