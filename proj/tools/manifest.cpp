// SPDX-License-Identifier: Apache-2.0
#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>


namespace gfolds::cli {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string git_blob_sha1_of(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("sha1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  return git_blob_sha1_of(read_file(path));
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_(utc_timestamp()) {}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.string(), git_blob_sha1(path));
}

void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path); }

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["version"] = GFOLDS_VERSION;
  j["seed"] = seed_;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_) {
    j["config"][k] = v;
  }
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [path, sha] : inputs_) {
    j["inputs"].push_back({{"path", path}, {"sha1", sha}});
  }
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& path : outputs_) {
    j["outputs"].push_back({{"path", path.string()}, {"sha1", git_blob_sha1(path)}});
  }
  j["started"] = started_;
  j["finished"] = utc_timestamp();
  return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write manifest " + path.string());
  }
  out << to_json().dump(2) << '\n';
}

}  // namespace gfolds::cli
