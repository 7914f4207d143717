// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Executable networks built from a NetworkPlan.
//
// Every weight slot of every planned layer becomes one parameter named
// `layer{i}.{slot}.weight`; sparse slots own a mask `layer{i}.{slot}.mask`.
// A layer computes, with sigma the plan's nonlinearity:
//
//   dense, sparse_wide   y = W x + b
//   sparse_parallel      y = sum_j sigma_j(W_j x) + b
//   sparse_factorized    y = V sigma(U x) + b
//   sparse_doped         y = V U x + sigma(W x) + b
//   low_rank_dense       y = V U x + b
//
// and the network-level activation follows every layer but the last.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/csr.hpp"
#include "forge/mask.hpp"
#include "forge/ops.hpp"
#include "forge/planner.hpp"
#include "forge/tensor.hpp"

namespace forge::network {

using planner::Nonlinearity;
using tensor::Mode;
using tensor::Shape;
using tensor::Tape;
using tensor::Var;

enum class ExecPath { masked_dense, compressed };
std::string_view to_string(ExecPath path);
ExecPath parse_exec_path(std::string_view text);

struct BuildOptions {
  std::uint64_t model_seed = 0;
  std::uint64_t mask_seed = 0;
  /// Applied after every layer except the last.
  Nonlinearity activation = Nonlinearity::relu;
  ExecPath path = ExecPath::masked_dense;
};

template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  std::vector<T> velocity;
  /// Weight decay applies; false for biases and normalization params.
  bool decay = true;
  /// Index into Network::masks(), or -1 for dense storage.
  int mask = -1;
};

/// Running statistics of one normalization.
template <typename T>
struct NormBuffer {
  std::string name;  // prefix, e.g. "layer0.branch1.norm"
  tensor::BatchNormState<T> state;
};

template <typename T>
class Network {
 public:
  static Network build(const planner::NetworkPlan& plan, const BuildOptions& options);

  /// Records the forward pass. `input` is [B x features] or NCHW; it is
  /// reshaped to what the first layer expects.
  Var forward(Tape<T>& tape, Var input, Mode mode);

  /// Copies gradients of the last forward/backward pass into the parameters.
  void collect_grads(Tape<T>& tape);

  /// When set, masked weights report their full dense gradient.
  void set_surface_dense_grads(bool on) { dense_grads_ = on; }
  bool surface_dense_grads() const { return dense_grads_; }
  void set_path(ExecPath path) { options_.path = path; }
  ExecPath path() const { return options_.path; }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  std::vector<mask::SparseMask>& masks() { return masks_; }
  const std::vector<mask::SparseMask>& masks() const { return masks_; }
  std::vector<NormBuffer<T>>& norms() { return norms_; }
  const std::vector<NormBuffer<T>>& norms() const { return norms_; }
  /// Name of each mask, parallel to masks().
  const std::vector<std::string>& mask_names() const { return mask_names_; }
  /// Parameter owning each mask, parallel to masks().
  std::size_t mask_param(std::size_t mask_index) const { return mask_owner_.at(mask_index); }

  Parameter<T>& param(const std::string& name);
  const Parameter<T>& param(const std::string& name) const;

  /// Active weights plus all dense parameters, or every storage position.
  std::int64_t param_count(bool active_only) const;
  /// Sum of the planned layers' mask search spaces.
  std::int64_t total_cardinality() const { return plan_.total_cardinality(); }
  /// MACs per batch element the plan predicts for the current masks.
  std::int64_t predicted_macs() const;
  const planner::NetworkPlan& plan() const { return plan_; }
  const BuildOptions& options() const { return options_; }

  /// Features per sample of the network input and output.
  std::int64_t input_features() const;
  std::int64_t output_features() const;

  /// Forward MACs recorded per layer by the last forward().
  const std::vector<std::uint64_t>& last_layer_macs() const { return layer_macs_; }

  /// Zeroes masked-out weights; call after writing parameter values.
  void apply_masks();

 private:
  struct SlotRef {
    planner::WeightSlot slot;
    std::size_t param = 0;
    int mask = -1;
    // Normalization applied to this slot's output (transform-internal).
    int norm = -1;
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::shared_ptr<const tensor::CsrPattern> pattern;
    std::uint64_t pattern_version = 0;
  };
  struct LayerRef {
    std::vector<SlotRef> slots;
    std::optional<std::size_t> bias;
    // Network-level normalization after the layer.
    int norm = -1;
    std::size_t gamma = 0;
    std::size_t beta = 0;
  };

  Var run_slot(Tape<T>& tape, SlotRef& ref, Var x);
  Var apply_sigma(Tape<T>& tape, Nonlinearity nl, Var y, int norm, std::size_t gamma,
                  std::size_t beta, Mode mode);
  Var run_layer(Tape<T>& tape, std::size_t index, Var x, Mode mode);
  std::size_t add_param(std::string name, Shape shape, std::vector<T> values, bool decay);
  int add_norm(const std::string& prefix, std::size_t channels, std::size_t& gamma,
               std::size_t& beta);

  planner::NetworkPlan plan_;
  BuildOptions options_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> by_name_;
  std::vector<mask::SparseMask> masks_;
  std::vector<std::string> mask_names_;
  std::vector<std::size_t> mask_owner_;
  std::vector<NormBuffer<T>> norms_;
  std::vector<LayerRef> layers_;
  std::vector<Var> bound_;
  std::vector<std::uint64_t> layer_macs_;
  bool dense_grads_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace forge::network
