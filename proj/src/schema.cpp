#include "clinstructor/schema.hpp"

#include <set>

namespace clinstructor::schema {
namespace {

const std::set<std::string> kTypes = {"object", "array",   "string", "number",
                                      "integer", "boolean", "null"};

std::optional<std::string> check_at(const json& s, const std::string& at) {
  if (!s.is_object()) return at + ": schema must be an object";
  if (s.contains("type")) {
    const auto& t = s["type"];
    if (!t.is_string() || !kTypes.count(t.get<std::string>())) {
      return at + ": unsupported type " + t.dump();
    }
  }
  if (s.contains("properties")) {
    if (!s["properties"].is_object()) return at + ": properties must be an object";
    for (const auto& [name, sub] : s["properties"].items()) {
      if (auto err = check_at(sub, at + "/properties/" + name)) return err;
    }
  }
  if (s.contains("required")) {
    const auto& r = s["required"];
    if (!r.is_array()) return at + ": required must be an array";
    for (const auto& k : r) {
      if (!k.is_string()) return at + ": required entries must be strings";
    }
  }
  if (s.contains("items")) {
    if (auto err = check_at(s["items"], at + "/items")) return err;
  }
  if (s.contains("additionalProperties") && !s["additionalProperties"].is_boolean()) {
    return at + ": additionalProperties must be a boolean";
  }
  for (const char* key : {"minItems", "maxItems"}) {
    if (s.contains(key) && !s[key].is_number_unsigned()) {
      return at + ": " + key + " must be a non-negative integer";
    }
  }
  if (s.contains("enum") && !s["enum"].is_array()) return at + ": enum must be an array";
  return std::nullopt;
}

bool type_matches(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") return v.is_number_integer();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

std::optional<std::string> validate_at(const json& v, const json& s, const std::string& at) {
  const std::string where = at.empty() ? "/" : at;
  if (s.contains("type") && !type_matches(v, s["type"].get<std::string>())) {
    return where + ": expected " + s["type"].get<std::string>() + ", got " + v.type_name();
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) return where + ": value not in enum";
  }
  if (v.is_object()) {
    if (s.contains("required")) {
      for (const auto& k : s["required"]) {
        if (!v.contains(k.get<std::string>())) {
          return where + ": missing required key \"" + k.get<std::string>() + "\"";
        }
      }
    }
    const bool closed = s.value("additionalProperties", true) == false;
    for (const auto& [name, child] : v.items()) {
      if (s.contains("properties") && s["properties"].contains(name)) {
        if (auto err = validate_at(child, s["properties"][name], at + "/" + name)) return err;
      } else if (closed) {
        return where + ": unexpected key \"" + name + "\"";
      }
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
      return where + ": fewer than " + s["minItems"].dump() + " items";
    }
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) {
      return where + ": more than " + s["maxItems"].dump() + " items";
    }
    if (s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (auto err = validate_at(v[i], s["items"], at + "/" + std::to_string(i))) return err;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> check_document(const json& schema) { return check_at(schema, "#"); }

std::optional<std::string> validate(const json& value, const json& schema) {
  return validate_at(value, schema, "");
}

}  // namespace clinstructor::schema
