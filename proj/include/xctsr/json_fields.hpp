#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "xctsr/error.hpp"

namespace xctsr {

// Rejects keys of `j` outside `allowed`, naming the section and the key.
inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& section) {
  require(j.is_object(), section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(section + "." + key + ": unknown key");
  }
}

// Reads j[key] into out when present, with a field-level diagnostic on type errors.
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(section + "." + key + ": " + e.what());
  }
}

}  // namespace xctsr
