#pragma once

// Typed access to JSON config fields with key-path error messages.

#include <string>
#include <vector>

#include "kabi/error.hpp"
#include "kabi/io.hpp"

namespace kabi::io {

inline std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

template <typename T>
T field_as(const Json& value, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>)
        if (value.is_number_integer() && !value.is_number_unsigned() && value.get<long long>() < 0) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!value.is_string()) throw ConfigError("");
    }
    return value.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + path + "' has the wrong type (got " + std::string(value.type_name()) + ")");
  }
}

// Returns j[key] converted to T, or `fallback` when the key is absent.
template <typename T>
T field_or(const Json& j, const std::string& key, const std::string& parent, const T& fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return field_as<T>(j.at(key), join_path(parent, key));
}

template <typename T>
T required_field(const Json& j, const std::string& key, const std::string& parent) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing config key '" + join_path(parent, key) + "'");
  return field_as<T>(j.at(key), join_path(parent, key));
}

inline const Json& section(const Json& j, const std::string& key) {
  static const Json empty = Json::object();
  if (!j.is_object() || !j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError("config key '" + key + "' must be an object");
  return j.at(key);
}

}  // namespace kabi::io
