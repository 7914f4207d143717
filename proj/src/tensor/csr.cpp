// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/csr.hpp"

#include <algorithm>
#include <string>

#include "forge/error.hpp"

namespace forge::tensor {

void CsrPattern::validate() const {
  if (offsets.size() != rows + 1) {
    throw FormatError("row offsets must have rows + 1 = " + std::to_string(rows + 1) +
                      " entries, got " + std::to_string(offsets.size()));
  }
  if (offsets.front() != 0) throw FormatError("row offsets must start at 0");
  if (offsets.back() != indices.size()) {
    throw FormatError("last row offset " + std::to_string(offsets.back()) +
                      " differs from nnz " + std::to_string(indices.size()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (offsets[r + 1] < offsets[r]) {
      throw FormatError("row offsets decrease at row " + std::to_string(r));
    }
    for (std::uint32_t p = offsets[r]; p < offsets[r + 1]; ++p) {
      if (indices[p] >= cols) {
        throw FormatError("column index " + std::to_string(indices[p]) + " out of range in row " +
                          std::to_string(r));
      }
      if (p > offsets[r] && indices[p] <= indices[p - 1]) {
        throw FormatError("column indices not strictly increasing in row " + std::to_string(r));
      }
    }
  }
}

CsrPattern CsrPattern::from_bitmap(std::span<const std::uint8_t> bitmap, std::size_t rows,
                                   std::size_t cols) {
  if (bitmap.size() != rows * cols) throw ShapeError("bitmap size does not match rows x cols");
  CsrPattern p;
  p.rows = rows;
  p.cols = cols;
  p.offsets.reserve(rows + 1);
  p.offsets.push_back(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* row = bitmap.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      if (row[c]) p.indices.push_back(static_cast<std::uint32_t>(c));
    }
    p.offsets.push_back(static_cast<std::uint32_t>(p.indices.size()));
  }
  return p;
}

CsrPattern CsrPattern::from_sorted_indices(std::span<const std::uint32_t> flat, std::size_t rows,
                                           std::size_t cols) {
  CsrPattern p;
  p.rows = rows;
  p.cols = cols;
  p.offsets.assign(rows + 1, 0);
  p.indices.reserve(flat.size());
  for (auto idx : flat) {
    const std::size_t r = idx / cols;
    if (r >= rows) throw ShapeError("flat index out of range");
    ++p.offsets[r + 1];
    p.indices.push_back(static_cast<std::uint32_t>(idx % cols));
  }
  for (std::size_t r = 0; r < rows; ++r) p.offsets[r + 1] += p.offsets[r];
  return p;
}

template <typename T>
void CompressedRows<T>::validate() const {
  pattern.validate();
  if (values.size() != pattern.nnz()) {
    throw FormatError("value count " + std::to_string(values.size()) + " differs from nnz " +
                      std::to_string(pattern.nnz()));
  }
}

template <typename T>
CompressedRows<T> CompressedRows<T>::gather(CsrPattern pattern, std::span<const T> dense) {
  if (dense.size() != pattern.rows * pattern.cols) {
    throw ShapeError("dense matrix size does not match the pattern");
  }
  CompressedRows<T> out;
  out.values.resize(pattern.nnz());
  for (std::size_t r = 0; r < pattern.rows; ++r) {
    for (std::uint32_t p = pattern.offsets[r]; p < pattern.offsets[r + 1]; ++p) {
      out.values[p] = dense[r * pattern.cols + pattern.indices[p]];
    }
  }
  out.pattern = std::move(pattern);
  return out;
}

template <typename T>
void csr_matmul(std::span<const T> x, std::size_t m, const CompressedRows<T>& w,
                std::span<T> out, std::uint64_t* macs) {
  w.validate();
  csr_matmul_unchecked(x, m, w, out, macs);
}

template <typename T>
void csr_matmul_unchecked(std::span<const T> x, std::size_t m, const CompressedRows<T>& w,
                          std::span<T> out, std::uint64_t* macs) {
  const std::size_t k = w.pattern.rows;
  const std::size_t n = w.pattern.cols;
  if (x.size() != m * k) throw ShapeError("csr_matmul: input is not m x k");
  if (out.size() != m * n) throw ShapeError("csr_matmul: output is not m x n");
  std::fill(out.begin(), out.end(), T{0});
  const auto* offsets = w.pattern.offsets.data();
  const auto* cols = w.pattern.indices.data();
  const T* vals = w.values.data();
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const T* xi = x.data() + i * k;
    T* oi = out.data() + i * n;
    for (std::size_t r = 0; r < k; ++r) {
      const T xv = xi[r];
      const std::uint32_t end = offsets[r + 1];
      for (std::uint32_t p = offsets[r]; p < end; ++p) oi[cols[p]] += xv * vals[p];
      count += end - offsets[r];
    }
  }
  if (macs) *macs += count;
}

template <typename T>
std::vector<T> csr_matmul(std::span<const T> x, std::size_t m, const CompressedRows<T>& w,
                          std::uint64_t* macs) {
  std::vector<T> out(m * w.pattern.cols);
  csr_matmul<T>(x, m, w, std::span<T>(out), macs);
  return out;
}

template struct CompressedRows<float>;
template struct CompressedRows<double>;
template void csr_matmul<float>(std::span<const float>, std::size_t, const CompressedRows<float>&,
                                std::span<float>, std::uint64_t*);
template void csr_matmul<double>(std::span<const double>, std::size_t,
                                 const CompressedRows<double>&, std::span<double>,
                                 std::uint64_t*);
template void csr_matmul_unchecked<float>(std::span<const float>, std::size_t,
                                          const CompressedRows<float>&, std::span<float>,
                                          std::uint64_t*);
template void csr_matmul_unchecked<double>(std::span<const double>, std::size_t,
                                           const CompressedRows<double>&, std::span<double>,
                                           std::uint64_t*);
template std::vector<float> csr_matmul<float>(std::span<const float>, std::size_t,
                                              const CompressedRows<float>&, std::uint64_t*);
template std::vector<double> csr_matmul<double>(std::span<const double>, std::size_t,
                                                const CompressedRows<double>&, std::uint64_t*);

}  // namespace forge::tensor
