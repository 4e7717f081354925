// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gfolds {

// Flat `key = value` text. '#' starts a comment; blank lines are ignored;
// later assignments override earlier ones. Typed getters throw ConfigError
// naming the key on a malformed value.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig parse_string(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return entries_.contains(key); }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::size_t get_size(const std::string& key) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated; surrounding whitespace trimmed; empty string -> empty list.
  std::vector<std::string> get_list(const std::string& key) const;

  // Throws ConfigError listing keys outside `known`.
  void check_known(std::span<const std::string_view> known) const;

  // Sorted by key, one `key = value` per line.
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
};

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace gfolds
