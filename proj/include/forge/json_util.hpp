// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Helpers for strict JSON field access with named validation errors.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "forge/error.hpp"

namespace forge::json_util {

/// Rejects any key of `j` not listed in `allowed`.
void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                  const std::string& where);

void require_object(const nlohmann::json& j, const std::string& where);

template <typename T>
T get(const nlohmann::json& j, std::string_view key, const std::string& where) {
  const std::string k(key);
  if (!j.contains(k)) throw ValidationError(where + ": missing required field '" + k + "'");
  try {
    return j.at(k).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field '" + k + "' has the wrong type");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, std::string_view key, T fallback, const std::string& where) {
  const std::string k(key);
  if (!j.contains(k) || j.at(k).is_null()) return fallback;
  return get<T>(j, key, where);
}

/// Integer field that must be a whole number (rejects 1.5).
std::int64_t get_int(const nlohmann::json& j, std::string_view key, const std::string& where);
std::int64_t get_int_or(const nlohmann::json& j, std::string_view key, std::int64_t fallback,
                        const std::string& where);

}  // namespace forge::json_util
