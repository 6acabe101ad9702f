#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "vrkn/error.hpp"

namespace vrkn {

/// Throws ConfigError unless `j` is an object whose keys are all in `allowed`.
inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

/// j[key] as T, or `fallback` when absent; a type mismatch is a ConfigError.
template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace vrkn
