// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Closed-form planning of Sparse Iso-FLOP Transformations.
//
// Every FLOP figure in this module is a multiply-accumulate count per batch
// element unless a batch argument is taken explicitly. Bias MACs are never
// included.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge::planner {

enum class LayerKind { linear, conv2d, depthwise_conv2d };
enum class LayerRole { boundary_first, boundary_last, interior };

enum class TransformKind {
  dense,
  sparse_wide,
  sparse_parallel,
  sparse_factorized,
  sparse_doped,
  low_rank_dense,
};

enum class Nonlinearity { batchnorm_relu, relu, identity };

std::string_view to_string(LayerKind kind);
std::string_view to_string(LayerRole role);
std::string_view to_string(TransformKind kind);
std::string_view to_string(Nonlinearity nl);
LayerKind parse_layer_kind(std::string_view text);
LayerRole parse_layer_role(std::string_view text);
TransformKind parse_transform(std::string_view text);
Nonlinearity parse_nonlinearity(std::string_view text);

/// Shape of one dense layer. For convolutions d_in/d_out are channel counts.
struct LayerSpec {
  LayerKind kind = LayerKind::linear;
  std::int64_t d_in = 1;
  std::int64_t d_out = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t out_h = 1;
  std::int64_t out_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  bool has_bias = true;
  LayerRole role = LayerRole::interior;
  /// Initialize the output-side weights to zero (residual tails).
  bool zero_init = false;

  static LayerSpec linear(std::int64_t d_in, std::int64_t d_out, bool bias = true);
  static LayerSpec conv2d(std::int64_t c_in, std::int64_t c_out, std::int64_t kernel,
                          std::int64_t out_hw, std::int64_t stride = 1,
                          std::int64_t padding = 0, bool bias = true);
  static LayerSpec depthwise(std::int64_t channels, std::int64_t kernel, std::int64_t out_hw,
                             std::int64_t stride = 1, std::int64_t padding = 0,
                             bool bias = true);

  /// Throws ValidationError when a dimension is < 1 or a linear layer carries
  /// spatial extents.
  void validate() const;

  std::int64_t in_h() const { return (out_h - 1) * stride + kernel_h - 2 * padding; }
  std::int64_t in_w() const { return (out_w - 1) * stride + kernel_w - 2 * padding; }
  std::int64_t spatial() const { return out_h * out_w; }
  /// Number of weight positions of the dense layer.
  std::int64_t weight_positions() const;
  /// Fan-in of the (c_in*k_h*k_w) x c_out matrix view used for factorization.
  std::int64_t matrix_rows() const;
  std::int64_t matrix_cols() const { return d_out; }

  bool operator==(const LayerSpec&) const = default;
};

/// Which part of a transformed layer a weight tensor plays.
enum class SlotRole { main, branch, factor_u, factor_v, sparse };
std::string_view to_string(SlotRole role);
SlotRole parse_slot_role(std::string_view text);

/// One weight tensor of a planned layer, in matrix form: rows = fan-in
/// positions, cols = output features. Depthwise slots use rows = channels,
/// cols = k_h*k_w.
struct WeightSlot {
  SlotRole role = SlotRole::main;
  int index = 0;
  LayerKind op = LayerKind::linear;
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  /// MACs contributed per active weight per batch element.
  std::int64_t spatial = 1;
  bool sparse = false;
  std::int64_t active = 0;

  std::int64_t rows() const;
  std::int64_t cols() const;
  std::int64_t positions() const { return rows() * cols(); }
  std::int64_t macs() const { return active * spatial; }
  /// Registry name fragment, e.g. "branch2" or "factor_u".
  std::string name() const;

  bool operator==(const WeightSlot&) const = default;
};

/// Integer dimensions after rounding.
struct RoundedDims {
  std::int64_t d_in = 0;
  std::int64_t d_out = 0;
  std::int64_t branches = 1;
  /// d_sf, d_sd or low-rank rank; 0 when unused.
  std::int64_t inner = 0;

  bool operator==(const RoundedDims&) const = default;
};

struct TransformPlan {
  TransformKind transform = TransformKind::dense;
  double nominal_sparsity = 0.0;
  /// Unrounded k_sw, k_sp, d_sf, d_sd or low-rank d.
  double scale = 1.0;
  RoundedDims rounded;
  double effective_sparsity = 0.0;
  /// Per batch element, bias excluded.
  std::int64_t predicted_macs = 0;
  /// Active positions among the tensors that effective_sparsity applies to.
  std::int64_t active_weights = 0;
  std::int64_t total_weight_positions = 0;
  /// Dense low-rank factors of sparse_doped, outside the sparsity budget.
  std::int64_t extra_dense_weights = 0;
  std::int64_t cardinality = 0;
  Nonlinearity nonlinearity = Nonlinearity::batchnorm_relu;
  std::vector<WeightSlot> slots;

  bool operator==(const TransformPlan&) const = default;
};

/// MACs of a dense layer at the given sparsity (rounded half-up when the
/// sparsity makes the product fractional).
std::int64_t flop_count(const LayerSpec& spec, std::int64_t batch = 1, double sparsity = 0.0);

/// Rounds x half-up to the nearest multiple of quantum.
std::int64_t round_to_quantum(double x, std::int64_t quantum = 1);

TransformPlan plan_dense(const LayerSpec& spec);
TransformPlan plan_sparse_wide(const LayerSpec& spec, double sparsity, std::int64_t quantum = 1);
TransformPlan plan_sparse_parallel(const LayerSpec& spec, double sparsity,
                                   Nonlinearity nl = Nonlinearity::batchnorm_relu);
TransformPlan plan_sparse_factorized(const LayerSpec& spec, double sparsity,
                                     Nonlinearity nl = Nonlinearity::batchnorm_relu);
TransformPlan plan_sparse_doped(const LayerSpec& spec, double sparsity,
                                Nonlinearity nl = Nonlinearity::batchnorm_relu);
/// Dense low-rank baseline with every dimension widened by k_lr. Its MACs
/// match the k_lr-widened dense layer, not the original one.
TransformPlan plan_low_rank_dense(const LayerSpec& spec, double k_lr, std::int64_t quantum = 1);

/// Dispatches on kind; `sparsity` carries k_lr for low_rank_dense.
TransformPlan plan_transform(const LayerSpec& spec, TransformKind kind, double sparsity,
                             std::int64_t quantum = 1,
                             Nonlinearity nl = Nonlinearity::batchnorm_relu);

// Plans on explicit (possibly widened) feature dims. Network planning uses
// these because widths propagate from neighbouring layers.
TransformPlan plan_dense_on(const LayerSpec& spec, std::int64_t wide_in, std::int64_t wide_out);
TransformPlan plan_sparse_wide_on(const LayerSpec& spec, std::int64_t wide_in,
                                  std::int64_t wide_out, double sparsity, double widening);
TransformPlan plan_low_rank_on(const LayerSpec& spec, std::int64_t wide_in,
                               std::int64_t wide_out, double k_lr);

/// Number of weight positions the mask of a plan can explore (rounded dims).
std::int64_t cardinality(const TransformPlan& plan, const LayerSpec& spec);

/// Closed-form search-space size with unrounded scale factors.
double search_space_size(TransformKind kind, double d_in, double d_out, double sparsity);

/// Unrounded scale factor of a transform (k_sw, k_sp, d_sf, d_sd).
double closed_form_scale(TransformKind kind, double d_in, double d_out, double sparsity);

struct IsoFlopAudit {
  std::int64_t dense_macs = 0;
  std::int64_t plan_macs = 0;
  double relative_error = 0.0;
  bool pass = false;
  std::int64_t dense_weights = 0;
  std::int64_t active_weights = 0;
};

IsoFlopAudit verify_isoflop(const TransformPlan& plan, const LayerSpec& spec,
                            double tolerance = 0.01);

/// Splits `total` active weights over tensors proportionally to their
/// sizes (largest remainder, ties to the lowest index).
std::vector<std::int64_t> distribute_active(std::int64_t total,
                                            const std::vector<std::int64_t>& sizes);

// ---------------------------------------------------------------------------
// Network-level planning

struct NetworkRequest {
  TransformKind transform = TransformKind::dense;
  /// Sparsity s, or k_lr for low_rank_dense.
  double sparsity = 0.0;
  std::int64_t quantum = 1;
  bool keep_boundary_dense = true;
  Nonlinearity nonlinearity = Nonlinearity::batchnorm_relu;
};

struct PlannedLayer {
  LayerSpec spec;
  TransformPlan plan;

  bool operator==(const PlannedLayer&) const = default;
};

struct NetworkPlan {
  NetworkRequest request;
  std::vector<PlannedLayer> layers;
  double shared_widening = 1.0;
  std::int64_t baseline_total_macs = 0;
  std::int64_t planned_total_macs = 0;
  std::optional<double> redistributed_sparsity;

  std::int64_t total_cardinality() const;
};

/// Throws ShapeError when consecutive layers do not chain.
void check_chain(const std::vector<LayerSpec>& specs);

/// First layer boundary_first, last boundary_last, the rest interior.
void assign_default_roles(std::vector<LayerSpec>& specs);

NetworkPlan plan_network(const std::vector<LayerSpec>& specs, const NetworkRequest& request);

/// Re-solves one uniform sparsity over the transformed layers so the whole
/// network meets `baseline_total_macs`. Throws InfeasiblePlanError when the
/// untransformed layers alone exceed the budget.
NetworkPlan redistribute_sparsity(const NetworkPlan& plan, std::int64_t baseline_total_macs);

}  // namespace forge::planner
