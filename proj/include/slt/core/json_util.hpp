#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "slt/core/errors.hpp"

namespace slt {

using json = nlohmann::json;

/// Rejects keys of `j` not listed in `allowed`.
inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
  }
}

/// Reads j[key] into `out` when present; type errors become ConfigError.
template <class T>
void read_opt(const json& j, const char* key, T& out, std::string_view section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace slt
