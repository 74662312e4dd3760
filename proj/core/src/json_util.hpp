// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "secloc/errors.hpp"

namespace secloc::detail {

inline std::string key_path(std::string_view parent, std::string_view key) {
  return parent.empty() ? std::string(key) : std::string(parent) + "." + std::string(key);
}

/// Rejects keys outside `allowed`, naming the offending path.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view path) {
  if (!j.is_object()) throw ConfigError(std::string(path.empty() ? "<root>" : path) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw ConfigError(key_path(path, k) + ": unknown key");
  }
}

/// Reads `key` into `out` when present; type errors name the key path.
template <class T>
void read_opt(const nlohmann::json& j, std::string_view key, T& out, std::string_view path) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key_path(path, key) + ": wrong type");
  }
}

template <class T>
T read_req(const nlohmann::json& j, std::string_view key, std::string_view path) {
  if (!j.contains(std::string(key))) throw ConfigError(key_path(path, key) + ": required key missing");
  T out{};
  read_opt(j, key, out, path);
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(0, path.string() + ": " + e.what());
  }
}

}  // namespace secloc::detail
