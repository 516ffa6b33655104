#pragma once

#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace eigencrit {

// Reports keep insertion order so identical runs serialize byte-identically.
using json = nlohmann::ordered_json;

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline void write_report(const json& report, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), errc::io_format, "cannot open report file '" + path + "'");
  out << report.dump(2) << '\n';
  require(out.good(), errc::io_format, "failed writing report file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Minimal JSON Schema checker covering the subset used by report.schema.json:
// type, enum, const, properties, required, additionalProperties, items,
// minItems, minimum, exclusiveMinimum, maximum, pattern, oneOf, and local
// "#/..." $ref. Returns human-readable violations; empty means valid.
// ---------------------------------------------------------------------------
namespace detail {

inline const json* resolve_ref(const json& root, const std::string& ref) {
  require(ref.rfind("#/", 0) == 0, errc::argument, "schema: unsupported $ref '" + ref + "'");
  const json* node = &root;
  std::istringstream is(ref.substr(2));
  std::string part;
  while (std::getline(is, part, '/')) {
    require(node->is_object() && node->contains(part), errc::argument,
            "schema: dangling $ref '" + ref + "'");
    node = &node->at(part);
  }
  return node;
}

inline bool type_matches(const json& doc, const std::string& t) {
  if (t == "object") return doc.is_object();
  if (t == "array") return doc.is_array();
  if (t == "string") return doc.is_string();
  if (t == "boolean") return doc.is_boolean();
  if (t == "integer") return doc.is_number_integer();
  if (t == "number") return doc.is_number();
  if (t == "null") return doc.is_null();
  fail(errc::argument, "schema: unknown type '" + t + "'");
}

inline void check_schema(const json& root, const json& schema, const json& doc,
                         const std::string& where, std::vector<std::string>& errors);

inline bool schema_accepts(const json& root, const json& schema, const json& doc) {
  std::vector<std::string> local;
  check_schema(root, schema, doc, "", local);
  return local.empty();
}

inline void check_schema(const json& root, const json& schema, const json& doc,
                         const std::string& where, std::vector<std::string>& errors) {
  const std::string at = where.empty() ? "$" : where;
  if (schema.contains("$ref")) {
    check_schema(root, *resolve_ref(root, schema["$ref"].get<std::string>()), doc, where,
                 errors);
    return;
  }

  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(doc, t.get<std::string>());
    } else {
      for (const auto& alt : t) ok = ok || type_matches(doc, alt.get<std::string>());
    }
    if (!ok) {
      errors.push_back(at + ": expected type " + t.dump() + ", got " + std::string(doc.type_name()));
      return;
    }
  }

  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& alt : schema["enum"]) ok = ok || alt == doc;
    if (!ok) errors.push_back(at + ": value " + doc.dump() + " not in enum");
  }
  if (schema.contains("const") && schema["const"] != doc)
    errors.push_back(at + ": value " + doc.dump() + " != const " + schema["const"].dump());

  if (doc.is_number()) {
    const double v = doc.get<double>();
    if (schema.contains("minimum") && v < schema["minimum"].get<double>())
      errors.push_back(at + ": " + doc.dump() + " below minimum");
    if (schema.contains("exclusiveMinimum") && v <= schema["exclusiveMinimum"].get<double>())
      errors.push_back(at + ": " + doc.dump() + " not above exclusiveMinimum");
    if (schema.contains("maximum") && v > schema["maximum"].get<double>())
      errors.push_back(at + ": " + doc.dump() + " above maximum");
  }

  if (doc.is_string() && schema.contains("pattern")) {
    const std::regex re(schema["pattern"].get<std::string>());
    if (!std::regex_search(doc.get<std::string>(), re))
      errors.push_back(at + ": string does not match pattern " + schema["pattern"].dump());
  }

  if (doc.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema["required"])
        if (!doc.contains(key.get<std::string>()))
          errors.push_back(at + ": missing required key '" + key.get<std::string>() + "'");
    }
    const json props = schema.value("properties", json::object());
    for (const auto& [key, sub] : props.items())
      if (doc.contains(key)) check_schema(root, sub, doc.at(key), at + "." + key, errors);
    if (schema.contains("additionalProperties")) {
      const json& ap = schema["additionalProperties"];
      for (const auto& [key, val] : doc.items()) {
        if (props.contains(key)) continue;
        if (ap.is_boolean()) {
          if (!ap.get<bool>()) errors.push_back(at + ": unexpected key '" + key + "'");
        } else {
          check_schema(root, ap, val, at + "." + key, errors);
        }
      }
    }
  }

  if (doc.is_array()) {
    if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>())
      errors.push_back(at + ": fewer than minItems elements");
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < doc.size(); ++i)
        check_schema(root, schema["items"], doc[i], at + "[" + std::to_string(i) + "]", errors);
    }
  }

  if (schema.contains("oneOf")) {
    int hits = 0;
    for (const auto& alt : schema["oneOf"])
      if (schema_accepts(root, alt, doc)) ++hits;
    if (hits != 1)
      errors.push_back(at + ": matched " + std::to_string(hits) + " of the oneOf variants");
  }
}

}  // namespace detail

inline std::vector<std::string> schema_errors(const json& doc, const json& schema) {
  std::vector<std::string> errors;
  detail::check_schema(schema, schema, doc, "", errors);
  return errors;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_format, "cannot open JSON file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io_format, "malformed JSON in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace eigencrit
