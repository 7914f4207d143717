// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include "forge/error.hpp"
#include "forge/planner.hpp"

namespace forge::planner {

namespace {

bool is_spatial(const LayerSpec& spec) { return spec.kind != LayerKind::linear; }

bool is_masked_transform(TransformKind kind) {
  return kind != TransformKind::dense && kind != TransformKind::low_rank_dense;
}

std::string layer_tag(std::size_t i) { return "layer " + std::to_string(i); }

}  // namespace

std::int64_t NetworkPlan::total_cardinality() const {
  std::int64_t total = 0;
  for (const auto& layer : layers) total += layer.plan.cardinality;
  return total;
}

void assign_default_roles(std::vector<LayerSpec>& specs) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].role = i == 0                  ? LayerRole::boundary_first
                    : i + 1 == specs.size() ? LayerRole::boundary_last
                                            : LayerRole::interior;
  }
}

void check_chain(const std::vector<LayerSpec>& specs) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    if (i == 0) continue;
    const LayerSpec& prev = specs[i - 1];
    const LayerSpec& cur = specs[i];
    if (cur.kind == LayerKind::linear) {
      const std::int64_t expected = is_spatial(prev) ? prev.d_out * prev.spatial() : prev.d_out;
      if (cur.d_in != expected) {
        throw ShapeError(layer_tag(i) + ": d_in " + std::to_string(cur.d_in) +
                         " does not match the " + std::to_string(expected) +
                         " features produced by " + layer_tag(i - 1));
      }
      continue;
    }
    if (!is_spatial(prev)) {
      throw ShapeError(layer_tag(i) + ": a convolution cannot follow a linear layer");
    }
    if (cur.d_in != prev.d_out) {
      throw ShapeError(layer_tag(i) + ": expects " + std::to_string(cur.d_in) +
                       " input channels, previous layer produces " + std::to_string(prev.d_out));
    }
    if (cur.in_h() != prev.out_h || cur.in_w() != prev.out_w) {
      throw ShapeError(layer_tag(i) + ": input extent " + std::to_string(cur.in_h()) + "x" +
                       std::to_string(cur.in_w()) + " does not match previous output " +
                       std::to_string(prev.out_h) + "x" + std::to_string(prev.out_w));
    }
  }
}

NetworkPlan plan_network(const std::vector<LayerSpec>& specs, const NetworkRequest& request) {
  if (specs.empty()) throw ValidationError("network has no layers");
  check_chain(specs);
  if (request.quantum < 1) throw ValidationError("quantum must be >= 1");

  const TransformKind kind = request.transform;
  const bool widens = kind == TransformKind::sparse_wide || kind == TransformKind::low_rank_dense;
  double widening = 1.0;
  if (kind == TransformKind::low_rank_dense) {
    if (!(request.sparsity >= 1.0)) throw ValidationError("k_lr must be >= 1");
    widening = request.sparsity;
  } else {
    if (!(request.sparsity >= 0.0 && request.sparsity < 1.0)) {
      throw ValidationError("sparsity must lie in [0, 1)");
    }
    if (kind == TransformKind::sparse_wide) widening = std::sqrt(1.0 / (1.0 - request.sparsity));
  }

  const std::size_t n = specs.size();
  std::vector<std::int64_t> wide_in(n), wide_out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& spec = specs[i];
    if (i == 0) {
      wide_in[i] = spec.d_in;
    } else if (spec.kind == LayerKind::linear && is_spatial(specs[i - 1])) {
      wide_in[i] = wide_out[i - 1] * specs[i - 1].spatial();
    } else {
      wide_in[i] = wide_out[i - 1];
    }
    if (spec.kind == LayerKind::depthwise_conv2d) {
      wide_out[i] = wide_in[i];
    } else if (i + 1 == n || !widens || (widening == 1.0)) {
      wide_out[i] = spec.d_out;
    } else {
      wide_out[i] = round_to_quantum(widening * static_cast<double>(spec.d_out), request.quantum);
    }
    if (i + 1 == n && wide_out[i] != spec.d_out) {
      throw ShapeError(layer_tag(i) + ": widened output " + std::to_string(wide_out[i]) +
                       " cannot feed the fixed network output " + std::to_string(spec.d_out));
    }
  }

  NetworkPlan plan;
  plan.request = request;
  plan.shared_widening = widening;
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& spec = specs[i];
    const bool keep_dense = request.keep_boundary_dense && spec.role != LayerRole::interior;
    TransformPlan layer;
    if (kind == TransformKind::sparse_wide) {
      layer = keep_dense ? plan_dense_on(spec, wide_in[i], wide_out[i])
                         : plan_sparse_wide_on(spec, wide_in[i], wide_out[i], request.sparsity,
                                               widening);
    } else if (kind == TransformKind::low_rank_dense) {
      layer = keep_dense ? plan_dense_on(spec, wide_in[i], wide_out[i])
                         : plan_low_rank_on(spec, wide_in[i], wide_out[i], widening);
    } else if (keep_dense || kind == TransformKind::dense) {
      layer = plan_dense(spec);
    } else {
      // Depthwise layers come back as dense pass-through plans.
      layer = plan_transform(spec, kind, request.sparsity, request.quantum,
                             request.nonlinearity);
    }
    if (layer.transform != TransformKind::low_rank_dense) layer.nonlinearity = request.nonlinearity;
    plan.baseline_total_macs += flop_count(spec);
    plan.planned_total_macs += layer.predicted_macs;
    plan.layers.push_back({spec, std::move(layer)});
  }
  return plan;
}

NetworkPlan redistribute_sparsity(const NetworkPlan& plan, std::int64_t baseline_total_macs) {
  std::int64_t fixed = 0;
  std::int64_t variable = 0;
  bool any = false;
  for (const auto& layer : plan.layers) {
    const bool masked = is_masked_transform(layer.plan.transform);
    for (const auto& slot : layer.plan.slots) {
      if (masked && slot.sparse) {
        variable += slot.positions() * slot.spatial;
        any = true;
      } else {
        fixed += slot.macs();
      }
    }
  }
  if (!any) throw ValidationError("redistribution needs at least one transformed layer");
  const double s = 1.0 - static_cast<double>(baseline_total_macs - fixed) /
                             static_cast<double>(variable);
  if (!(s >= 0.0 && s < 1.0)) {
    throw InfeasiblePlanError(
        "cannot meet the MAC budget: untransformed layers need " + std::to_string(fixed) +
        " of " + std::to_string(baseline_total_macs) + " MACs (uniform sparsity would be " +
        std::to_string(s) + ")");
  }

  NetworkPlan out = plan;
  out.planned_total_macs = 0;
  out.redistributed_sparsity = s;
  for (auto& layer : out.layers) {
    TransformPlan& p = layer.plan;
    if (is_masked_transform(p.transform)) {
      const auto active = static_cast<std::int64_t>(
          std::floor((1.0 - s) * static_cast<double>(p.total_weight_positions) + 0.5));
      std::vector<std::int64_t> sizes;
      for (const auto& slot : p.slots) {
        if (slot.sparse) sizes.push_back(slot.positions());
      }
      const auto counts = distribute_active(active, sizes);
      std::size_t k = 0;
      p.predicted_macs = 0;
      for (auto& slot : p.slots) {
        if (slot.sparse) slot.active = counts[k++];
        p.predicted_macs += slot.macs();
      }
      p.active_weights = active;
      p.effective_sparsity = s;
    }
    out.planned_total_macs += p.predicted_macs;
  }
  return out;
}

}  // namespace forge::planner
