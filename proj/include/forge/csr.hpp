// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Compressed-row storage for unstructured sparse weights and the
// dense-by-sparse product used by the compressed execution path.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace forge::tensor {

/// Sparsity structure of a rows x cols matrix.
struct CsrPattern {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> offsets;  // rows + 1 entries
  std::vector<std::uint32_t> indices;  // column of each stored entry

  std::size_t nnz() const { return indices.size(); }

  /// Throws FormatError unless offsets start at 0, end at nnz, never
  /// decrease, and column indices strictly increase within each row and
  /// stay below cols.
  void validate() const;

  /// Pattern of the non-zero entries of a row-major bitmap.
  static CsrPattern from_bitmap(std::span<const std::uint8_t> bitmap, std::size_t rows,
                                std::size_t cols);
  /// Pattern from sorted flat row-major indices.
  static CsrPattern from_sorted_indices(std::span<const std::uint32_t> flat, std::size_t rows,
                                        std::size_t cols);
};

template <typename T>
struct CompressedRows {
  CsrPattern pattern;
  std::vector<T> values;

  void validate() const;

  /// Stores the entries of `dense` (row-major rows x cols) selected by the
  /// pattern.
  static CompressedRows gather(CsrPattern pattern, std::span<const T> dense);
};

/// out[m x n] = x[m x k] * w[k x n]. `out` is overwritten. When `macs` is
/// given it is incremented once per multiply-accumulate performed.
template <typename T>
void csr_matmul(std::span<const T> x, std::size_t m, const CompressedRows<T>& w,
                std::span<T> out, std::uint64_t* macs = nullptr);

/// csr_matmul without structural validation, for hot loops whose pattern
/// was validated once up front.
template <typename T>
void csr_matmul_unchecked(std::span<const T> x, std::size_t m, const CompressedRows<T>& w,
                          std::span<T> out, std::uint64_t* macs = nullptr);

/// Convenience overload returning a fresh m x n buffer.
template <typename T>
std::vector<T> csr_matmul(std::span<const T> x, std::size_t m, const CompressedRows<T>& w,
                          std::uint64_t* macs = nullptr);

}  // namespace forge::tensor
