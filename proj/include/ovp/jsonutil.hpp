#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "ovp/error.hpp"

namespace ovp {

// Strict-config helper: every present key must be in the allowed list.
inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& context) {
  check_config(j.is_object(), context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    check_config(known, context + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T json_get(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: key '" + key + "' has the wrong type");
  }
}

template <typename T>
T json_require(const nlohmann::json& j, const std::string& key,
               const std::string& context) {
  check_config(j.contains(key), context + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(context + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace ovp
