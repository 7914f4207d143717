// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/network.hpp"

#include <cmath>

#include "forge/conv.hpp"
#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge::network {

using planner::LayerKind;
using planner::SlotRole;
using planner::TransformKind;
using planner::WeightSlot;

std::string_view to_string(ExecPath path) {
  return path == ExecPath::compressed ? "compressed" : "masked_dense";
}

ExecPath parse_exec_path(std::string_view text) {
  if (text == "masked_dense") return ExecPath::masked_dense;
  if (text == "compressed") return ExecPath::compressed;
  throw ValidationError("unknown execution path '" + std::string(text) +
                        "' (expected masked_dense or compressed)");
}

namespace {

// Random stream of a slot. The primary weight of every transform shares tag
// 0, so an s=0 transform starts from the same values as the dense layer.
std::uint64_t slot_tag(const WeightSlot& slot) {
  switch (slot.role) {
    case SlotRole::main:
    case SlotRole::sparse:
      return 0;
    case SlotRole::branch:
      return static_cast<std::uint64_t>(slot.index);
    case SlotRole::factor_u:
      return 1001;
    case SlotRole::factor_v:
      return 1002;
  }
  return 0;
}

bool output_side(SlotRole role) { return role != SlotRole::factor_u; }

std::int64_t fan_in(const WeightSlot& slot) {
  return slot.op == LayerKind::depthwise_conv2d ? slot.cols() : slot.rows();
}

// He gain, except where a factor reads the un-activated output of U: a
// linear U-V chain with gain 2 on both factors doubles the variance.
double init_gain(TransformKind transform, const WeightSlot& slot) {
  const bool linear_chain =
      transform == TransformKind::sparse_doped || transform == TransformKind::low_rank_dense;
  return linear_chain && slot.role == SlotRole::factor_v ? 1.0 : 2.0;
}

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i); }

bool spatial_kind(LayerKind kind) { return kind != LayerKind::linear; }

}  // namespace

template <typename T>
std::size_t Network<T>::add_param(std::string name, Shape shape, std::vector<T> values,
                                  bool decay) {
  if (by_name_.count(name)) throw ValidationError("duplicate parameter name " + name);
  Parameter<T> p;
  p.name = name;
  p.shape = std::move(shape);
  p.values = std::move(values);
  p.grad.assign(p.values.size(), T{0});
  p.velocity.assign(p.values.size(), T{0});
  p.decay = decay;
  params_.push_back(std::move(p));
  by_name_[name] = params_.size() - 1;
  return params_.size() - 1;
}

template <typename T>
int Network<T>::add_norm(const std::string& prefix, std::size_t channels, std::size_t& gamma,
                         std::size_t& beta) {
  gamma = add_param(prefix + ".gamma", {channels}, std::vector<T>(channels, T{1}), false);
  beta = add_param(prefix + ".beta", {channels}, std::vector<T>(channels, T{0}), false);
  norms_.push_back({prefix, tensor::BatchNormState<T>(channels)});
  return static_cast<int>(norms_.size() - 1);
}

template <typename T>
Network<T> Network<T>::build(const planner::NetworkPlan& plan, const BuildOptions& options) {
  if (plan.layers.empty()) throw ValidationError("cannot build a network without layers");
  Network net;
  net.plan_ = plan;
  net.options_ = options;
  const std::size_t n = plan.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [spec, p] = plan.layers[i];
    if (i > 0) {
      const auto& prev = plan.layers[i - 1];
      std::int64_t produced = prev.plan.rounded.d_out;
      if (spec.kind == LayerKind::linear && spatial_kind(prev.spec.kind)) {
        produced *= prev.spec.spatial();
      }
      if (produced != p.rounded.d_in) {
        throw ShapeError(layer_prefix(i) + " expects " + std::to_string(p.rounded.d_in) +
                         " inputs, " + layer_prefix(i - 1) + " produces " +
                         std::to_string(produced));
      }
    }
    const std::string prefix = layer_prefix(i);
    LayerRef layer;
    for (const WeightSlot& slot : p.slots) {
      SlotRef ref;
      ref.slot = slot;
      const auto rows = static_cast<std::size_t>(slot.rows());
      const auto cols = static_cast<std::size_t>(slot.cols());
      std::vector<T> values(rows * cols, T{0});
      if (!(spec.zero_init && output_side(slot.role))) {
        CounterRng rng(derive_key(derive_key(options.model_seed, i), slot_tag(slot)));
        const double stddev = std::sqrt(init_gain(p.transform, slot) /
                                        static_cast<double>(fan_in(slot)));
        for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
      }
      const std::string name = prefix + "." + slot.name();
      ref.param = net.add_param(name + ".weight", {rows, cols}, std::move(values), true);
      if (slot.sparse) {
        auto m = mask::init_mask_with_count(
            {rows, cols}, static_cast<std::size_t>(slot.active),
            derive_key(derive_key(options.mask_seed, i), slot_tag(slot)));
        m.apply(std::span<T>(net.params_[ref.param].values));
        net.masks_.push_back(std::move(m));
        net.mask_names_.push_back(name + ".mask");
        net.mask_owner_.push_back(ref.param);
        ref.mask = static_cast<int>(net.masks_.size() - 1);
        net.params_[ref.param].mask = ref.mask;
      }
      const bool internal_norm =
          p.nonlinearity == Nonlinearity::batchnorm_relu &&
          (slot.role == SlotRole::branch || slot.role == SlotRole::sparse ||
           (slot.role == SlotRole::factor_u && p.transform == TransformKind::sparse_factorized));
      if (internal_norm) {
        ref.norm = net.add_norm(name + ".norm", static_cast<std::size_t>(slot.out_channels),
                                ref.gamma, ref.beta);
      }
      layer.slots.push_back(std::move(ref));
    }
    const auto width = static_cast<std::size_t>(p.rounded.d_out);
    if (spec.has_bias) {
      layer.bias = net.add_param(prefix + ".out.bias", {width}, std::vector<T>(width, T{0}), false);
    }
    if (i + 1 < n && options.activation == Nonlinearity::batchnorm_relu) {
      layer.norm = net.add_norm(prefix + ".norm", width, layer.gamma, layer.beta);
    }
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

template <typename T>
Parameter<T>& Network<T>::param(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ValidationError("no parameter named " + name);
  return params_[it->second];
}

template <typename T>
const Parameter<T>& Network<T>::param(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ValidationError("no parameter named " + name);
  return params_[it->second];
}

template <typename T>
std::int64_t Network<T>::param_count(bool active_only) const {
  std::int64_t total = 0;
  for (const auto& p : params_) {
    if (active_only && p.mask >= 0) {
      total += static_cast<std::int64_t>(masks_[p.mask].active_count());
    } else {
      total += static_cast<std::int64_t>(p.values.size());
    }
  }
  return total;
}

template <typename T>
std::int64_t Network<T>::predicted_macs() const {
  std::int64_t total = 0;
  for (const auto& layer : layers_) {
    for (const auto& ref : layer.slots) {
      const auto active = ref.mask >= 0 ? static_cast<std::int64_t>(masks_[ref.mask].active_count())
                                        : ref.slot.positions();
      total += active * ref.slot.spatial;
    }
  }
  return total;
}

template <typename T>
std::int64_t Network<T>::input_features() const {
  const auto& first = plan_.layers.front();
  if (first.spec.kind == LayerKind::linear) return first.plan.rounded.d_in;
  return first.plan.rounded.d_in * first.spec.in_h() * first.spec.in_w();
}

template <typename T>
std::int64_t Network<T>::output_features() const {
  const auto& last = plan_.layers.back();
  return last.plan.rounded.d_out * last.spec.spatial();
}

template <typename T>
void Network<T>::apply_masks() {
  for (auto& p : params_) {
    if (p.mask >= 0) masks_[p.mask].apply(std::span<T>(p.values));
  }
}

template <typename T>
Var Network<T>::run_slot(Tape<T>& tape, SlotRef& ref, Var x) {
  const WeightSlot& slot = ref.slot;
  const Var w = bound_[ref.param];
  const auto mode = dense_grads_ ? tensor::WeightGrad::dense : tensor::WeightGrad::masked;
  std::span<const std::uint8_t> bits;
  if (ref.mask >= 0 && !masks_[ref.mask].dense()) bits = masks_[ref.mask].bitmap();
  const bool compressed = options_.path == ExecPath::compressed && !bits.empty();
  if (compressed && slot.op != LayerKind::depthwise_conv2d &&
      (!ref.pattern || ref.pattern_version != masks_[ref.mask].version())) {
    auto pattern = std::make_shared<tensor::CsrPattern>(tensor::CsrPattern::from_sorted_indices(
        masks_[ref.mask].active(), static_cast<std::size_t>(slot.rows()),
        static_cast<std::size_t>(slot.cols())));
    ref.pattern = std::move(pattern);
    ref.pattern_version = masks_[ref.mask].version();
  }
  tensor::ConvGeometry geo{static_cast<std::size_t>(slot.kernel_h),
                           static_cast<std::size_t>(slot.kernel_w),
                           static_cast<std::size_t>(slot.stride),
                           static_cast<std::size_t>(slot.padding)};
  switch (slot.op) {
    case LayerKind::linear: {
      const Shape& s = tape.shape(x);
      if (s.size() != 2) x = tensor::reshape(tape, x, {s[0], tensor::numel(s) / s[0]});
      return compressed ? tensor::csr_linear(tape, x, w, ref.pattern, Var{}, mode)
                        : tensor::masked_linear(tape, x, w, bits, Var{}, mode);
    }
    case LayerKind::conv2d:
      return compressed ? tensor::conv2d_csr(tape, x, w, geo, ref.pattern, Var{}, mode)
                        : tensor::conv2d(tape, x, w, geo, bits, Var{}, mode);
    case LayerKind::depthwise_conv2d:
      return tensor::depthwise_conv2d(tape, x, w, geo, bits, Var{}, mode);
  }
  throw ValidationError("unknown slot operator");
}

template <typename T>
Var Network<T>::apply_sigma(Tape<T>& tape, Nonlinearity nl, Var y, int norm, std::size_t gamma,
                            std::size_t beta, Mode mode) {
  switch (nl) {
    case Nonlinearity::identity:
      return y;
    case Nonlinearity::relu:
      return tensor::relu(tape, y);
    case Nonlinearity::batchnorm_relu:
      if (norm < 0) throw ValidationError("normalization requested but not built");
      return tensor::relu(tape, tensor::batchnorm(tape, y, bound_[gamma], bound_[beta],
                                                  norms_[norm].state, mode));
  }
  return y;
}

template <typename T>
Var Network<T>::run_layer(Tape<T>& tape, std::size_t index, Var x, Mode mode) {
  LayerRef& layer = layers_[index];
  const auto& [spec, p] = plan_.layers[index];
  auto find = [&](SlotRole role) -> SlotRef* {
    for (auto& ref : layer.slots) {
      if (ref.slot.role == role) return &ref;
    }
    return nullptr;
  };
  auto sigma = [&](SlotRef& ref, Var y) {
    return apply_sigma(tape, p.nonlinearity, y, ref.norm, ref.gamma, ref.beta, mode);
  };
  Var y;
  switch (p.transform) {
    case TransformKind::dense:
    case TransformKind::sparse_wide:
      y = run_slot(tape, layer.slots.at(0), x);
      break;
    case TransformKind::sparse_parallel:
      for (auto& ref : layer.slots) {
        Var branch = sigma(ref, run_slot(tape, ref, x));
        y = y.valid() ? tensor::add(tape, y, branch) : branch;
      }
      break;
    case TransformKind::sparse_factorized: {
      SlotRef* u = find(SlotRole::factor_u);
      SlotRef* v = find(SlotRole::factor_v);
      y = run_slot(tape, *v, sigma(*u, run_slot(tape, *u, x)));
      break;
    }
    case TransformKind::sparse_doped: {
      SlotRef* w = find(SlotRole::sparse);
      y = sigma(*w, run_slot(tape, *w, x));
      if (SlotRef* u = find(SlotRole::factor_u)) {
        SlotRef* v = find(SlotRole::factor_v);
        y = tensor::add(tape, run_slot(tape, *v, run_slot(tape, *u, x)), y);
      }
      break;
    }
    case TransformKind::low_rank_dense: {
      SlotRef* u = find(SlotRole::factor_u);
      SlotRef* v = find(SlotRole::factor_v);
      y = run_slot(tape, *v, run_slot(tape, *u, x));
      break;
    }
  }
  if (spatial_kind(spec.kind)) {
    const Shape& s = tape.shape(y);
    if (s[2] != static_cast<std::size_t>(spec.out_h) ||
        s[3] != static_cast<std::size_t>(spec.out_w)) {
      throw ShapeError(layer_prefix(index) + " produced " + tensor::shape_str(s) +
                       ", planned output extent " + std::to_string(spec.out_h) + "x" +
                       std::to_string(spec.out_w));
    }
  }
  if (layer.bias) y = tensor::add_bias(tape, y, bound_[*layer.bias]);
  if (index + 1 < layers_.size()) {
    y = apply_sigma(tape, options_.activation, y, layer.norm, layer.gamma, layer.beta, mode);
  }
  return y;
}

template <typename T>
Var Network<T>::forward(Tape<T>& tape, Var input, Mode mode) {
  bound_.clear();
  for (const auto& p : params_) bound_.push_back(tape.variable(p.shape, p.values));
  const Shape& s = tape.shape(input);
  const std::size_t batch = s.at(0);
  const std::size_t features = tensor::numel(s) / std::max<std::size_t>(batch, 1);
  if (static_cast<std::int64_t>(features) != input_features()) {
    throw ShapeError("network expects " + std::to_string(input_features()) +
                     " input features per sample, got " + tensor::shape_str(s));
  }
  const auto& first = plan_.layers.front();
  Var x = input;
  if (first.spec.kind == LayerKind::linear) {
    if (s.size() != 2) x = tensor::reshape(tape, x, {batch, features});
  } else if (s.size() != 4) {
    x = tensor::reshape(tape, x,
                        {batch, static_cast<std::size_t>(first.plan.rounded.d_in),
                         static_cast<std::size_t>(first.spec.in_h()),
                         static_cast<std::size_t>(first.spec.in_w())});
  }
  layer_macs_.assign(layers_.size(), 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::uint64_t before = tape.macs();
    x = run_layer(tape, i, x, mode);
    layer_macs_[i] = tape.macs() - before;
  }
  const Shape& out = tape.shape(x);
  if (out.size() != 2) x = tensor::reshape(tape, x, {out[0], tensor::numel(out) / out[0]});
  return x;
}

template <typename T>
void Network<T>::collect_grads(Tape<T>& tape) {
  if (bound_.size() != params_.size()) throw ValidationError("collect_grads before forward");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& g = params_[i].grad;
    if (tape.has_grad(bound_[i])) {
      auto src = tape.grad(bound_[i]);
      g.assign(src.begin(), src.end());
    } else {
      std::fill(g.begin(), g.end(), T{0});
    }
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace forge::network
