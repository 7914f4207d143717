// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/plan_json.hpp"

#include "forge/json_util.hpp"

namespace forge::json_util {

void require_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
}

void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                  const std::string& where) {
  require_object(j, where);
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto name : allowed) known = known || name == item.key();
    if (!known) throw ValidationError(where + ": unknown key '" + item.key() + "'");
  }
}

std::int64_t get_int(const nlohmann::json& j, std::string_view key, const std::string& where) {
  const std::string k(key);
  if (!j.contains(k)) throw ValidationError(where + ": missing required field '" + k + "'");
  const auto& v = j.at(k);
  if (!v.is_number_integer()) {
    throw ValidationError(where + ": field '" + k + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

std::int64_t get_int_or(const nlohmann::json& j, std::string_view key, std::int64_t fallback,
                        const std::string& where) {
  if (!j.contains(std::string(key))) return fallback;
  return get_int(j, key, where);
}

}  // namespace forge::json_util

namespace forge::planner {

using nlohmann::json;
namespace ju = forge::json_util;

json to_json(const LayerSpec& spec) {
  json j = {{"kind", to_string(spec.kind)}, {"d_in", spec.d_in},   {"d_out", spec.d_out},
            {"bias", spec.has_bias},        {"role", to_string(spec.role)}};
  if (spec.kind != LayerKind::linear) {
    j["kernel_h"] = spec.kernel_h;
    j["kernel_w"] = spec.kernel_w;
    j["out_h"] = spec.out_h;
    j["out_w"] = spec.out_w;
    j["stride"] = spec.stride;
    j["padding"] = spec.padding;
  }
  if (spec.zero_init) j["zero_init"] = true;
  return j;
}

LayerSpec layer_spec_from_json(const json& j, const std::string& where) {
  ju::require_keys(j,
                   {"kind", "d_in", "d_out", "kernel_h", "kernel_w", "out_h", "out_w", "stride",
                    "padding", "bias", "role", "zero_init"},
                   where);
  LayerSpec spec;
  spec.kind = parse_layer_kind(ju::get_or<std::string>(j, "kind", "linear", where));
  spec.d_in = ju::get_int(j, "d_in", where);
  spec.d_out = ju::get_int(j, "d_out", where);
  spec.kernel_h = ju::get_int_or(j, "kernel_h", 1, where);
  spec.kernel_w = ju::get_int_or(j, "kernel_w", 1, where);
  spec.out_h = ju::get_int_or(j, "out_h", 1, where);
  spec.out_w = ju::get_int_or(j, "out_w", 1, where);
  spec.stride = ju::get_int_or(j, "stride", 1, where);
  spec.padding = ju::get_int_or(j, "padding", 0, where);
  spec.has_bias = ju::get_or<bool>(j, "bias", true, where);
  spec.zero_init = ju::get_or<bool>(j, "zero_init", false, where);
  if (j.contains("role")) spec.role = parse_layer_role(ju::get<std::string>(j, "role", where));
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return spec;
}

namespace {

json slot_to_json(const WeightSlot& s) {
  return {{"role", to_string(s.role)},
          {"index", s.index},
          {"op", to_string(s.op)},
          {"in_channels", s.in_channels},
          {"out_channels", s.out_channels},
          {"kernel_h", s.kernel_h},
          {"kernel_w", s.kernel_w},
          {"stride", s.stride},
          {"padding", s.padding},
          {"spatial", s.spatial},
          {"sparse", s.sparse},
          {"active", s.active},
          {"rows", s.rows()},
          {"cols", s.cols()}};
}

WeightSlot slot_from_json(const json& j) {
  WeightSlot s;
  s.role = parse_slot_role(j.at("role").get<std::string>());
  s.index = j.at("index").get<int>();
  s.op = parse_layer_kind(j.at("op").get<std::string>());
  s.in_channels = j.at("in_channels").get<std::int64_t>();
  s.out_channels = j.at("out_channels").get<std::int64_t>();
  s.kernel_h = j.at("kernel_h").get<std::int64_t>();
  s.kernel_w = j.at("kernel_w").get<std::int64_t>();
  s.stride = j.at("stride").get<std::int64_t>();
  s.padding = j.at("padding").get<std::int64_t>();
  s.spatial = j.at("spatial").get<std::int64_t>();
  s.sparse = j.at("sparse").get<bool>();
  s.active = j.at("active").get<std::int64_t>();
  return s;
}

}  // namespace

json to_json(const TransformPlan& p) {
  json slots = json::array();
  for (const auto& s : p.slots) slots.push_back(slot_to_json(s));
  return {{"transform", to_string(p.transform)},
          {"nominal_sparsity", p.nominal_sparsity},
          {"scale", p.scale},
          {"rounded",
           {{"d_in", p.rounded.d_in},
            {"d_out", p.rounded.d_out},
            {"branches", p.rounded.branches},
            {"inner", p.rounded.inner}}},
          {"effective_sparsity", p.effective_sparsity},
          {"predicted_macs", p.predicted_macs},
          {"active_weights", p.active_weights},
          {"total_weight_positions", p.total_weight_positions},
          {"extra_dense_weights", p.extra_dense_weights},
          {"cardinality", p.cardinality},
          {"nonlinearity", to_string(p.nonlinearity)},
          {"slots", slots}};
}

TransformPlan transform_plan_from_json(const json& j) {
  try {
    TransformPlan p;
    p.transform = parse_transform(j.at("transform").get<std::string>());
    p.nominal_sparsity = j.at("nominal_sparsity").get<double>();
    p.scale = j.at("scale").get<double>();
    const auto& r = j.at("rounded");
    p.rounded = {r.at("d_in").get<std::int64_t>(), r.at("d_out").get<std::int64_t>(),
                 r.at("branches").get<std::int64_t>(), r.at("inner").get<std::int64_t>()};
    p.effective_sparsity = j.at("effective_sparsity").get<double>();
    p.predicted_macs = j.at("predicted_macs").get<std::int64_t>();
    p.active_weights = j.at("active_weights").get<std::int64_t>();
    p.total_weight_positions = j.at("total_weight_positions").get<std::int64_t>();
    p.extra_dense_weights = j.at("extra_dense_weights").get<std::int64_t>();
    p.cardinality = j.at("cardinality").get<std::int64_t>();
    p.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
    for (const auto& s : j.at("slots")) p.slots.push_back(slot_from_json(s));
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed transform plan: ") + e.what());
  }
}

json to_json(const NetworkRequest& r) {
  return {{"transform", to_string(r.transform)},
          {"sparsity", r.sparsity},
          {"quantum", r.quantum},
          {"keep_boundary_dense", r.keep_boundary_dense},
          {"nonlinearity", to_string(r.nonlinearity)}};
}

NetworkRequest network_request_from_json(const json& j) {
  NetworkRequest r;
  r.transform = parse_transform(j.at("transform").get<std::string>());
  r.sparsity = j.at("sparsity").get<double>();
  r.quantum = j.at("quantum").get<std::int64_t>();
  r.keep_boundary_dense = j.at("keep_boundary_dense").get<bool>();
  r.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
  return r;
}

json to_json(const NetworkPlan& plan) {
  json layers = json::array();
  for (const auto& layer : plan.layers) {
    layers.push_back({{"spec", to_json(layer.spec)}, {"plan", to_json(layer.plan)}});
  }
  return {{"request", to_json(plan.request)},
          {"layers", layers},
          {"shared_widening", plan.shared_widening},
          {"baseline_total_macs", plan.baseline_total_macs},
          {"planned_total_macs", plan.planned_total_macs},
          {"total_cardinality", plan.total_cardinality()},
          {"redistributed_sparsity", plan.redistributed_sparsity
                                         ? json(*plan.redistributed_sparsity)
                                         : json(nullptr)}};
}

NetworkPlan network_plan_from_json(const json& j) {
  try {
    NetworkPlan plan;
    plan.request = network_request_from_json(j.at("request"));
    for (const auto& layer : j.at("layers")) {
      plan.layers.push_back({layer_spec_from_json(layer.at("spec"), "plan layer"),
                             transform_plan_from_json(layer.at("plan"))});
    }
    plan.shared_widening = j.at("shared_widening").get<double>();
    plan.baseline_total_macs = j.at("baseline_total_macs").get<std::int64_t>();
    plan.planned_total_macs = j.at("planned_total_macs").get<std::int64_t>();
    if (!j.at("redistributed_sparsity").is_null()) {
      plan.redistributed_sparsity = j.at("redistributed_sparsity").get<double>();
    }
    return plan;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network plan: ") + e.what());
  }
}

}  // namespace forge::planner
