// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "forge/planner.hpp"

namespace forge::planner {

nlohmann::json to_json(const LayerSpec& spec);
nlohmann::json to_json(const TransformPlan& plan);
nlohmann::json to_json(const NetworkRequest& request);
nlohmann::json to_json(const NetworkPlan& plan);

/// Strict parse: unknown keys and wrong types raise ValidationError naming
/// `where` and the offending field.
LayerSpec layer_spec_from_json(const nlohmann::json& j, const std::string& where);
TransformPlan transform_plan_from_json(const nlohmann::json& j);
NetworkRequest network_request_from_json(const nlohmann::json& j);
NetworkPlan network_plan_from_json(const nlohmann::json& j);

}  // namespace forge::planner
