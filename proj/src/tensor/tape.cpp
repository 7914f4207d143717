// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/tensor.hpp"

#include <cmath>

#include "forge/error.hpp"

namespace forge::tensor {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
Var Tape<T>::push(Shape shape, std::vector<T> values, bool requires_grad, BackwardFn backward) {
  if (numel(shape) != values.size()) {
    throw ShapeError("node value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  if (check_finite_) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw NumericError("non-finite value at node " + std::to_string(nodes_.size()) +
                           ", element " + std::to_string(i));
      }
    }
  }
  nodes_.push_back({std::move(shape), std::move(values), {}, requires_grad,
                    requires_grad ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::constant(Shape shape, std::vector<T> values) {
  return push(std::move(shape), std::move(values), false, {});
}

template <typename T>
Var Tape<T>::variable(Shape shape, std::vector<T> values) {
  return push(std::move(shape), std::move(values), true, {});
}

template <typename T>
Var Tape<T>::record(Shape shape, std::vector<T> values, std::initializer_list<Var> parents,
                    BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) {
    if (p.valid()) needs = needs || nodes_.at(p.id).requires_grad;
  }
  return push(std::move(shape), std::move(values), needs, std::move(backward));
}

template <typename T>
std::span<T> Tape<T>::grad(Var v) {
  Node& node = nodes_.at(v.id);
  if (node.grad.empty()) node.grad.assign(node.value.size(), T{0});
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (nodes_.at(root.id).value.size() != 1) {
    throw ShapeError("backward() needs a single-element root, got " +
                     shape_str(nodes_[root.id].shape));
  }
  grad(root)[0] = T{1};
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this);
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  macs_ = 0;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace forge::tensor
