// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace gfolds::cli {

// SHA-1 of "blob <size>\0<content>", the object id git assigns the file.
std::string git_blob_sha1(const std::filesystem::path& path);
std::string git_blob_sha1_of(const std::string& content);

std::string utc_timestamp();

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_config(std::map<std::string, std::string> config) { config_ = std::move(config); }
  void add_input(const std::filesystem::path& path);
  // Outputs are hashed when the manifest is written.
  void add_output(const std::filesystem::path& path);

  nlohmann::ordered_json to_json() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> config_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::string started_;
};

}  // namespace gfolds::cli
