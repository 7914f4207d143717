// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "forge/error.hpp"

namespace forge::planner {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::string_view (&names)[N], const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  throw ValidationError(std::string("unknown ") + what + " '" + std::string(text) + "'");
}

constexpr std::string_view kLayerKinds[] = {"linear", "conv2d", "depthwise_conv2d"};
constexpr std::string_view kRoles[] = {"boundary_first", "boundary_last", "interior"};
constexpr std::string_view kTransforms[] = {"dense",          "sparse_wide",
                                            "sparse_parallel", "sparse_factorized",
                                            "sparse_doped",   "low_rank_dense"};
constexpr std::string_view kNonlinearities[] = {"batchnorm_relu", "relu", "identity"};
constexpr std::string_view kSlotRoles[] = {"main", "branch", "factor_u", "factor_v", "sparse"};

void check_sparsity(double s) {
  if (!(s >= 0.0 && s < 1.0)) {
    throw ValidationError("sparsity must lie in [0, 1), got " + std::to_string(s));
  }
}

std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

// Slot executing the layer's own operator with new channel counts.
WeightSlot same_op_slot(const LayerSpec& spec, SlotRole role, int index, std::int64_t in_ch,
                        std::int64_t out_ch) {
  WeightSlot slot;
  slot.role = role;
  slot.index = index;
  slot.op = spec.kind;
  slot.in_channels = in_ch;
  slot.out_channels = out_ch;
  slot.kernel_h = spec.kernel_h;
  slot.kernel_w = spec.kernel_w;
  slot.stride = spec.stride;
  slot.padding = spec.padding;
  slot.spatial = spec.spatial();
  return slot;
}

// Pointwise expansion following a factor U: linear stays linear, conv
// becomes a 1x1 convolution over the same output grid.
WeightSlot pointwise_slot(const LayerSpec& spec, SlotRole role, std::int64_t in_ch,
                          std::int64_t out_ch) {
  WeightSlot slot;
  slot.role = role;
  slot.op = spec.kind == LayerKind::linear ? LayerKind::linear : LayerKind::conv2d;
  slot.in_channels = in_ch;
  slot.out_channels = out_ch;
  slot.spatial = spec.spatial();
  return slot;
}

// Recomputes the aggregate fields of a plan from its slots.
void finalize(TransformPlan& plan, const LayerSpec& spec) {
  plan.predicted_macs = 0;
  for (const auto& slot : plan.slots) plan.predicted_macs += slot.macs();
  plan.cardinality = cardinality(plan, spec);
}

// Spreads `active` over the sparse slots and fills the sparsity bookkeeping.
void assign_sparse_active(TransformPlan& plan, std::int64_t active) {
  std::vector<std::int64_t> sizes;
  std::int64_t positions = 0;
  for (const auto& slot : plan.slots) {
    if (slot.sparse) {
      sizes.push_back(slot.positions());
      positions += slot.positions();
    }
  }
  const auto counts = distribute_active(active, sizes);
  std::size_t k = 0;
  for (auto& slot : plan.slots) {
    if (slot.sparse) slot.active = counts[k++];
  }
  plan.total_weight_positions = positions;
  plan.active_weights = active;
  plan.effective_sparsity =
      positions == 0 ? 0.0 : 1.0 - static_cast<double>(active) / static_cast<double>(positions);
}

}  // namespace

std::string_view to_string(LayerKind kind) { return kLayerKinds[static_cast<int>(kind)]; }
std::string_view to_string(LayerRole role) { return kRoles[static_cast<int>(role)]; }
std::string_view to_string(TransformKind kind) { return kTransforms[static_cast<int>(kind)]; }
std::string_view to_string(Nonlinearity nl) { return kNonlinearities[static_cast<int>(nl)]; }
std::string_view to_string(SlotRole role) { return kSlotRoles[static_cast<int>(role)]; }

LayerKind parse_layer_kind(std::string_view text) {
  return parse_enum<LayerKind>(text, kLayerKinds, "layer kind");
}
LayerRole parse_layer_role(std::string_view text) {
  return parse_enum<LayerRole>(text, kRoles, "layer role");
}
TransformKind parse_transform(std::string_view text) {
  return parse_enum<TransformKind>(text, kTransforms, "transform");
}
Nonlinearity parse_nonlinearity(std::string_view text) {
  return parse_enum<Nonlinearity>(text, kNonlinearities, "nonlinearity");
}
SlotRole parse_slot_role(std::string_view text) {
  return parse_enum<SlotRole>(text, kSlotRoles, "slot role");
}

// ---------------------------------------------------------------------------
// LayerSpec

LayerSpec LayerSpec::linear(std::int64_t d_in, std::int64_t d_out, bool bias) {
  LayerSpec spec;
  spec.d_in = d_in;
  spec.d_out = d_out;
  spec.has_bias = bias;
  return spec;
}

LayerSpec LayerSpec::conv2d(std::int64_t c_in, std::int64_t c_out, std::int64_t kernel,
                            std::int64_t out_hw, std::int64_t stride, std::int64_t padding,
                            bool bias) {
  LayerSpec spec;
  spec.kind = LayerKind::conv2d;
  spec.d_in = c_in;
  spec.d_out = c_out;
  spec.kernel_h = spec.kernel_w = kernel;
  spec.out_h = spec.out_w = out_hw;
  spec.stride = stride;
  spec.padding = padding;
  spec.has_bias = bias;
  return spec;
}

LayerSpec LayerSpec::depthwise(std::int64_t channels, std::int64_t kernel, std::int64_t out_hw,
                               std::int64_t stride, std::int64_t padding, bool bias) {
  LayerSpec spec = conv2d(channels, channels, kernel, out_hw, stride, padding, bias);
  spec.kind = LayerKind::depthwise_conv2d;
  return spec;
}

void LayerSpec::validate() const {
  const std::pair<const char*, std::int64_t> dims[] = {
      {"d_in", d_in},       {"d_out", d_out}, {"kernel_h", kernel_h},
      {"kernel_w", kernel_w}, {"out_h", out_h}, {"out_w", out_w},
      {"stride", stride}};
  for (const auto& [name, value] : dims) {
    if (value < 1) {
      throw ValidationError(std::string("layer field '") + name + "' must be >= 1, got " +
                            std::to_string(value));
    }
  }
  if (padding < 0) throw ValidationError("layer field 'padding' must be >= 0");
  if (kind == LayerKind::linear) {
    if (kernel_h != 1 || kernel_w != 1 || out_h != 1 || out_w != 1 || stride != 1 ||
        padding != 0) {
      throw ValidationError("linear layers must have unit kernel, output extent and stride");
    }
  } else {
    if (in_h() < 1 || in_w() < 1 || in_h() + 2 * padding < kernel_h ||
        in_w() + 2 * padding < kernel_w) {
      throw ValidationError("convolution geometry implies an empty input");
    }
  }
  if (kind == LayerKind::depthwise_conv2d && d_in != d_out) {
    throw ValidationError("depthwise layers need d_in == d_out");
  }
}

std::int64_t LayerSpec::weight_positions() const {
  switch (kind) {
    case LayerKind::linear:
      return d_in * d_out;
    case LayerKind::conv2d:
      return d_in * d_out * kernel_h * kernel_w;
    case LayerKind::depthwise_conv2d:
      return d_out * kernel_h * kernel_w;
  }
  return 0;
}

std::int64_t LayerSpec::matrix_rows() const {
  switch (kind) {
    case LayerKind::linear:
      return d_in;
    case LayerKind::conv2d:
      return d_in * kernel_h * kernel_w;
    case LayerKind::depthwise_conv2d:
      return kernel_h * kernel_w;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// WeightSlot

std::int64_t WeightSlot::rows() const {
  switch (op) {
    case LayerKind::linear:
      return in_channels;
    case LayerKind::conv2d:
      return in_channels * kernel_h * kernel_w;
    case LayerKind::depthwise_conv2d:
      return out_channels;
  }
  return 0;
}

std::int64_t WeightSlot::cols() const {
  return op == LayerKind::depthwise_conv2d ? kernel_h * kernel_w : out_channels;
}

std::string WeightSlot::name() const {
  if (role == SlotRole::branch) return "branch" + std::to_string(index);
  return std::string(to_string(role));
}

// ---------------------------------------------------------------------------
// Counting

std::int64_t flop_count(const LayerSpec& spec, std::int64_t batch, double sparsity) {
  spec.validate();
  if (batch < 1) throw ValidationError("batch must be >= 1");
  check_sparsity(sparsity);
  const std::int64_t dense = batch * spec.spatial() * spec.weight_positions();
  if (sparsity == 0.0) return dense;
  return round_half_up(static_cast<double>(dense) * (1.0 - sparsity));
}

std::int64_t round_to_quantum(double x, std::int64_t quantum) {
  if (quantum < 1) throw ValidationError("quantum must be >= 1");
  const auto q = static_cast<double>(quantum);
  return std::max<std::int64_t>(quantum, round_half_up(x / q) * quantum);
}

std::vector<std::int64_t> distribute_active(std::int64_t total,
                                            const std::vector<std::int64_t>& sizes) {
  std::vector<std::int64_t> out(sizes.size(), 0);
  if (sizes.empty()) {
    if (total != 0) throw ValidationError("cannot place active weights in zero tensors");
    return out;
  }
  const std::int64_t sum = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
  if (total < 0 || total > sum) {
    throw ValidationError("active count " + std::to_string(total) + " exceeds capacity " +
                          std::to_string(sum));
  }
  std::vector<std::int64_t> remainder(sizes.size());
  std::int64_t placed = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const __int128 num = static_cast<__int128>(total) * sizes[i];
    out[i] = static_cast<std::int64_t>(num / sum);
    remainder[i] = static_cast<std::int64_t>(num % sum);
    placed += out[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; placed < total; ++k) {
    ++out[order[k % order.size()]];
    ++placed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transform plans

TransformPlan plan_dense_on(const LayerSpec& spec, std::int64_t wide_in, std::int64_t wide_out) {
  spec.validate();
  TransformPlan plan;
  plan.transform = TransformKind::dense;
  plan.rounded = {wide_in, wide_out, 1, 0};
  auto slot = same_op_slot(spec, SlotRole::main, 0, wide_in, wide_out);
  slot.active = slot.positions();
  plan.total_weight_positions = slot.positions();
  plan.active_weights = slot.positions();
  plan.slots.push_back(slot);
  finalize(plan, spec);
  return plan;
}

TransformPlan plan_dense(const LayerSpec& spec) { return plan_dense_on(spec, spec.d_in, spec.d_out); }

TransformPlan plan_sparse_wide_on(const LayerSpec& spec, std::int64_t wide_in,
                                  std::int64_t wide_out, double sparsity, double widening) {
  spec.validate();
  check_sparsity(sparsity);
  if (spec.kind == LayerKind::depthwise_conv2d && wide_in != spec.d_in && wide_in != wide_out) {
    throw ShapeError("widened depthwise layer needs matching input and output channels");
  }
  TransformPlan plan;
  plan.transform = TransformKind::sparse_wide;
  plan.nominal_sparsity = sparsity;
  plan.scale = widening;
  plan.rounded = {wide_in, wide_out, 1, 0};
  auto slot = same_op_slot(spec, SlotRole::main, 0, wide_in, wide_out);
  slot.sparse = true;
  plan.slots.push_back(slot);
  const std::int64_t dense = spec.weight_positions();
  if (slot.positions() < dense) {
    throw InfeasiblePlanError("rounded sparse-wide shape " + std::to_string(wide_in) + "x" +
                              std::to_string(wide_out) +
                              " is smaller than the dense layer (negative sparsity)");
  }
  assign_sparse_active(plan, dense);
  finalize(plan, spec);
  return plan;
}

TransformPlan plan_sparse_wide(const LayerSpec& spec, double sparsity, std::int64_t quantum) {
  spec.validate();
  check_sparsity(sparsity);
  if (spec.kind == LayerKind::depthwise_conv2d) {
    // Only the output channels scale, so the whole factor lands on one side.
    const double k = 1.0 / (1.0 - sparsity);
    return plan_sparse_wide_on(spec, spec.d_in, round_to_quantum(k * spec.d_out, quantum),
                               sparsity, k);
  }
  const double k = std::sqrt(1.0 / (1.0 - sparsity));
  if (sparsity == 0.0) return plan_sparse_wide_on(spec, spec.d_in, spec.d_out, 0.0, 1.0);
  return plan_sparse_wide_on(spec, round_to_quantum(k * spec.d_in, quantum),
                             round_to_quantum(k * spec.d_out, quantum), sparsity, k);
}

TransformPlan plan_sparse_parallel(const LayerSpec& spec, double sparsity, Nonlinearity nl) {
  spec.validate();
  check_sparsity(sparsity);
  if (spec.kind == LayerKind::depthwise_conv2d) return plan_dense(spec);
  TransformPlan plan;
  plan.transform = TransformKind::sparse_parallel;
  plan.nominal_sparsity = sparsity;
  plan.nonlinearity = nl;
  plan.scale = 1.0 / (1.0 - sparsity);
  const std::int64_t branches = std::max<std::int64_t>(1, round_half_up(plan.scale));
  plan.rounded = {spec.d_in, spec.d_out, branches, 0};
  for (std::int64_t j = 0; j < branches; ++j) {
    auto slot = same_op_slot(spec, SlotRole::branch, static_cast<int>(j), spec.d_in, spec.d_out);
    slot.sparse = true;
    plan.slots.push_back(slot);
  }
  assign_sparse_active(plan, spec.weight_positions());
  finalize(plan, spec);
  return plan;
}

TransformPlan plan_sparse_factorized(const LayerSpec& spec, double sparsity, Nonlinearity nl) {
  spec.validate();
  check_sparsity(sparsity);
  if (spec.kind == LayerKind::depthwise_conv2d) return plan_dense(spec);
  const std::int64_t rows = spec.matrix_rows();
  const std::int64_t cols = spec.matrix_cols();
  const std::int64_t dense = spec.weight_positions();
  TransformPlan plan;
  plan.transform = TransformKind::sparse_factorized;
  plan.nominal_sparsity = sparsity;
  plan.nonlinearity = nl;
  plan.scale = closed_form_scale(TransformKind::sparse_factorized, static_cast<double>(rows),
                                 static_cast<double>(cols), sparsity);
  std::int64_t inner = std::max<std::int64_t>(1, round_half_up(plan.scale));
  if (inner * (rows + cols) < dense) {
    // Rounding down would leave fewer positions than the dense budget.
    inner = (dense + rows + cols - 1) / (rows + cols);
  }
  plan.rounded = {spec.d_in, spec.d_out, 1, inner};
  auto u = same_op_slot(spec, SlotRole::factor_u, 0, spec.d_in, inner);
  auto v = pointwise_slot(spec, SlotRole::factor_v, inner, spec.d_out);
  u.sparse = v.sparse = true;
  plan.slots = {u, v};
  assign_sparse_active(plan, dense);
  finalize(plan, spec);
  return plan;
}

TransformPlan plan_sparse_doped(const LayerSpec& spec, double sparsity, Nonlinearity nl) {
  spec.validate();
  check_sparsity(sparsity);
  if (spec.kind == LayerKind::depthwise_conv2d) return plan_dense(spec);
  const std::int64_t rows = spec.matrix_rows();
  const std::int64_t cols = spec.matrix_cols();
  const std::int64_t dense = spec.weight_positions();
  TransformPlan plan;
  plan.transform = TransformKind::sparse_doped;
  plan.nominal_sparsity = sparsity;
  plan.nonlinearity = nl;
  plan.scale = closed_form_scale(TransformKind::sparse_doped, static_cast<double>(rows),
                                 static_cast<double>(cols), sparsity);
  std::int64_t inner = round_half_up(plan.scale);
  if (dense - inner * (rows + cols) < 1) {
    // Rounding up would consume the whole budget; the floor always leaves
    // at least (1 - s) of it for the unstructured branch.
    inner = static_cast<std::int64_t>(std::floor(plan.scale));
  }
  plan.rounded = {spec.d_in, spec.d_out, 1, inner};
  if (inner > 0) {
    auto u = same_op_slot(spec, SlotRole::factor_u, 0, spec.d_in, inner);
    auto v = pointwise_slot(spec, SlotRole::factor_v, inner, spec.d_out);
    u.active = u.positions();
    v.active = v.positions();
    plan.extra_dense_weights = u.positions() + v.positions();
    plan.slots = {u, v};
  }
  auto w = same_op_slot(spec, SlotRole::sparse, 0, spec.d_in, spec.d_out);
  w.sparse = true;
  plan.slots.push_back(w);
  assign_sparse_active(plan, dense - plan.extra_dense_weights);
  finalize(plan, spec);
  return plan;
}

TransformPlan plan_low_rank_on(const LayerSpec& spec, std::int64_t wide_in,
                               std::int64_t wide_out, double k_lr) {
  spec.validate();
  if (!(k_lr >= 1.0)) throw ValidationError("k_lr must be >= 1");
  if (spec.kind == LayerKind::depthwise_conv2d) return plan_dense_on(spec, wide_in, wide_out);
  const auto rows = static_cast<double>(spec.matrix_rows());
  const auto cols = static_cast<double>(spec.matrix_cols());
  TransformPlan plan;
  plan.transform = TransformKind::low_rank_dense;
  plan.scale = rows * cols * k_lr / (rows + cols);
  const std::int64_t rank = std::max<std::int64_t>(1, round_half_up(plan.scale));
  plan.rounded = {wide_in, wide_out, 1, rank};
  auto u = same_op_slot(spec, SlotRole::factor_u, 0, wide_in, rank);
  auto v = pointwise_slot(spec, SlotRole::factor_v, rank, wide_out);
  u.active = u.positions();
  v.active = v.positions();
  plan.slots = {u, v};
  plan.total_weight_positions = plan.active_weights = u.positions() + v.positions();
  plan.nonlinearity = Nonlinearity::identity;
  finalize(plan, spec);
  return plan;
}

TransformPlan plan_low_rank_dense(const LayerSpec& spec, double k_lr, std::int64_t quantum) {
  spec.validate();
  if (!(k_lr >= 1.0)) throw ValidationError("k_lr must be >= 1");
  return plan_low_rank_on(spec, round_to_quantum(k_lr * spec.d_in, quantum),
                          round_to_quantum(k_lr * spec.d_out, quantum), k_lr);
}

TransformPlan plan_transform(const LayerSpec& spec, TransformKind kind, double sparsity,
                             std::int64_t quantum, Nonlinearity nl) {
  TransformPlan plan;
  switch (kind) {
    case TransformKind::dense:
      plan = plan_dense(spec);
      break;
    case TransformKind::sparse_wide:
      plan = plan_sparse_wide(spec, sparsity, quantum);
      break;
    case TransformKind::sparse_parallel:
      return plan_sparse_parallel(spec, sparsity, nl);
    case TransformKind::sparse_factorized:
      return plan_sparse_factorized(spec, sparsity, nl);
    case TransformKind::sparse_doped:
      return plan_sparse_doped(spec, sparsity, nl);
    case TransformKind::low_rank_dense:
      return plan_low_rank_dense(spec, sparsity, quantum);
  }
  plan.nonlinearity = nl;
  return plan;
}

// ---------------------------------------------------------------------------
// Search space and audits

std::int64_t cardinality(const TransformPlan& plan, const LayerSpec& spec) {
  switch (plan.transform) {
    case TransformKind::dense:
      return plan.total_weight_positions;
    case TransformKind::low_rank_dense:
      return 0;
    case TransformKind::sparse_doped:
      return spec.weight_positions();
    default:
      break;
  }
  std::int64_t total = 0;
  for (const auto& slot : plan.slots) {
    if (slot.sparse) total += slot.positions();
  }
  return total;
}

double closed_form_scale(TransformKind kind, double d_in, double d_out, double sparsity) {
  check_sparsity(sparsity);
  switch (kind) {
    case TransformKind::sparse_wide:
      return std::sqrt(1.0 / (1.0 - sparsity));
    case TransformKind::sparse_parallel:
      return 1.0 / (1.0 - sparsity);
    case TransformKind::sparse_factorized:
      return d_in * d_out / ((d_in + d_out) * (1.0 - sparsity));
    case TransformKind::sparse_doped:
      return sparsity * d_in * d_out / (d_in + d_out);
    default:
      return 1.0;
  }
}

double search_space_size(TransformKind kind, double d_in, double d_out, double sparsity) {
  const double scale = closed_form_scale(kind, d_in, d_out, sparsity);
  switch (kind) {
    case TransformKind::sparse_wide:
      return scale * scale * d_in * d_out;
    case TransformKind::sparse_parallel:
      return scale * d_in * d_out;
    case TransformKind::sparse_factorized:
      return scale * (d_in + d_out);
    case TransformKind::sparse_doped:
    case TransformKind::dense:
      return d_in * d_out;
    case TransformKind::low_rank_dense:
      return 0.0;
  }
  return 0.0;
}

IsoFlopAudit verify_isoflop(const TransformPlan& plan, const LayerSpec& spec, double tolerance) {
  if (!(tolerance > 0.0)) throw ValidationError("tolerance must be > 0");
  IsoFlopAudit audit;
  audit.dense_macs = flop_count(spec);
  audit.plan_macs = plan.predicted_macs;
  audit.relative_error = std::abs(static_cast<double>(audit.plan_macs - audit.dense_macs)) /
                         static_cast<double>(audit.dense_macs);
  audit.pass = audit.relative_error <= tolerance;
  audit.dense_weights = spec.weight_positions();
  audit.active_weights = plan.active_weights + plan.extra_dense_weights;
  return audit;
}

}  // namespace forge::planner
