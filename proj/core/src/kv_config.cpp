// SPDX-License-Identifier: Apache-2.0
#include "gfolds/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "gfolds/errors.hpp"

namespace gfolds {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    const std::string body = trim(line);
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  return parse(in);
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  entries_[key] = std::move(value);
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("config: missing required key '" + key + "'");
  }
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

long long KeyValueConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) {
    throw ConfigError("config: key '" + key + "' must be non-negative, got " + std::to_string(v));
  }
  return static_cast<std::size_t>(v);
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return has(key) ? get_size(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) {
      throw std::invalid_argument(v);
    }
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) {
    return fallback;
  }
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    return false;
  }
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const std::string v = get_string(key);
  if (trim(v).empty()) {
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    const auto comma = v.find(',', start);
    out.push_back(trim(std::string_view(v).substr(start, comma == std::string::npos
                                                             ? std::string::npos
                                                             : comma - start)));
    if (comma == std::string::npos) {
      return out;
    }
    start = comma + 1;
  }
}

void KeyValueConfig::check_known(std::span<const std::string_view> known) const {
  std::string unknown;
  for (const auto& [key, value] : entries_) {
    bool ok = false;
    for (auto k : known) {
      ok = ok || k == key;
    }
    if (!ok) {
      unknown += (unknown.empty() ? "" : ", ") + key;
    }
  }
  if (!unknown.empty()) {
    throw ConfigError("config: unknown key(s): " + unknown);
  }
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key + " = " + value + "\n";
  }
  return out;
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot create config file " + path.string());
  }
  out << to_text();
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

}  // namespace gfolds
