// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation tape over dense row-major arrays.
//
// A Tape records one forward pass. Each recorded node owns its values; the
// gradient buffer is allocated when backward() first touches it. Tapes are
// single-owner and are cleared between optimizer steps.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace forge::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Handle to a node of a Tape.
struct Var {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// Leaf that never receives a gradient.
  Var constant(Shape shape, std::vector<T> values);
  /// Leaf whose gradient is accumulated by backward().
  Var variable(Shape shape, std::vector<T> values);
  /// Interior node. It requires a gradient when any parent does; the
  /// backward function is dropped otherwise.
  Var record(Shape shape, std::vector<T> values, std::initializer_list<Var> parents,
             BackwardFn backward);

  const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }
  std::span<const T> value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient buffer of v, zero-initialized on first access.
  std::span<T> grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  /// Forward multiply-accumulates recorded by the ops on this tape.
  std::uint64_t macs() const { return macs_; }
  void add_macs(std::uint64_t n) { macs_ += n; }
  void reset_macs() { macs_ = 0; }

  /// When enabled every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Shape shape, std::vector<T> values, bool requires_grad, BackwardFn backward);

  std::vector<Node> nodes_;
  std::uint64_t macs_ = 0;
  bool check_finite_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace forge::tensor
