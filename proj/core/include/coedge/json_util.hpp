#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "coedge/errors.hpp"

namespace coedge {

using json = nlohmann::json;

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonSchemaError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw JsonSchemaError(path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const std::string& path, const json& j, int indent = 2) {
  std::ofstream out(path);
  if (!out) throw JsonSchemaError("cannot write " + path);
  out << j.dump(indent) << "\n";
}

// Rejects unknown fields; `allowed` must contain every key required or optional.
inline void require_object(const json& j, const std::set<std::string>& allowed,
                           const std::string& context) {
  if (!j.is_object()) throw JsonSchemaError(context + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw JsonSchemaError(context + ": unknown field '" + it.key() + "'");
    }
  }
}

inline const json& require_field(const json& j, const std::string& key,
                                 const std::string& context) {
  auto it = j.find(key);
  if (it == j.end()) throw JsonSchemaError(context + ": missing field '" + key + "'");
  return *it;
}

}  // namespace coedge
