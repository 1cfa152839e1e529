// seqconf/kvconfig.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Minimal key=value config files: one "key=value" per line, '#' comments.

#ifndef SEQCONF_KVCONFIG_HPP_
#define SEQCONF_KVCONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "seqconf/common.hpp"

namespace seqconf {

class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      require(eq != std::string::npos,
              "config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
      cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KvConfig load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), "missing config key: " + key);
    return it->second;
  }
  std::string get(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  int get_int(const std::string& key) const { return to_int(get(key), key); }
  int get_int(const std::string& key, int dflt) const {
    return has(key) ? get_int(key) : dflt;
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
    if (!has(key)) return dflt;
    return static_cast<std::uint64_t>(std::stoull(get(key)));
  }
  double get_double(const std::string& key) const {
    try {
      return std::stod(get(key));
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "': not a number: " + get(key));
    }
  }
  double get_double(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_int(const std::string& key, long long value) { values_[key] = std::to_string(value); }
  void set_double(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    values_[key] = buf;
  }

  // Canonical text form (keys sorted); also the input of the config hash.
  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
    return out.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write config file: " + path);
    out << serialize();
  }

  // FNV-1a over the canonical serialization.
  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : serialize()) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static int to_int(const std::string& s, const std::string& key) {
    try {
      return std::stoi(s);
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "': not an integer: " + s);
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace seqconf

#endif  // SEQCONF_KVCONFIG_HPP_
