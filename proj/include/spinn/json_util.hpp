#pragma once

#include <complex>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "spinn/errors.hpp"

namespace spinn {

using json = nlohmann::json;

// Complex values are stored as [re, im] pairs.
inline json to_json(std::complex<double> z) { return json::array({z.real(), z.imag()}); }

inline std::complex<double> complex_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ctx + ": expected a [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

// Strict-schema guard: every key of `obj` must appear in `allowed`.
inline void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& ctx) {
  if (!obj.is_object()) throw Error(ctx + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw Error(ctx + ": unknown key \"" + item.key() + "\"");
  }
}

inline void check_schema_version(const json& j, int expected, const std::string& ctx) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw Error(ctx + ": missing schema_version");
  const int v = j["schema_version"].get<int>();
  if (v != expected)
    throw Error(ctx + ": unsupported schema_version " + std::to_string(v) +
                " (expected " + std::to_string(expected) + ")");
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("failed to parse " + path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("failed to write file: " + path);
}

// FNV-1a 64-bit fingerprint, reported as a hex string.  Used to tie trained
// models to the exact dataset bytes they were trained on.
inline std::string fingerprint_bytes(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

inline std::string fingerprint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fingerprint_bytes(ss.str());
}

}  // namespace spinn
