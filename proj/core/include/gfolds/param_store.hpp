// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfolds/tensor.hpp"

namespace gfolds {

// Named, insertion-ordered collection of learnable tensors. Move-only:
// tensors are shared handles, so an implicit copy would alias weights.
template <class T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  BasicTensor<T>& add(const std::string& name, Shape shape, std::vector<T> values);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const BasicTensor<T>& get(const std::string& name) const;
  BasicTensor<T>& get(const std::string& name);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t num_elements() const noexcept;

  void set_trainable(const std::string& name, bool trainable);
  bool trainable(const std::string& name) const;

  // Zero-filled gradients for every trainable tensor.
  void zero_grad();
  void clear_grad();

  ParamStore clone() const;

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& name : names_) {
      const auto src = get(name).data();
      out.add(name, get(name).shape(), std::vector<U>(src.begin(), src.end()));
      out.set_trainable(name, trainable(name));
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<BasicTensor<T>> tensors_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binary tensor container:
//   "GFLD" | u32 version | records...
//   record: u32 name_len | name bytes | u32 rank | u64 extents[rank] | f32 data[numel]
// All integers and floats little-endian. Records run to end of file.
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

class ContainerWriter {
 public:
  explicit ContainerWriter(std::ostream& out);
  void write(const std::string& name, const Shape& shape, std::span<const float> data);

 private:
  std::ostream& out_;
};

std::vector<NamedTensor> read_container(std::istream& in);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

void save_params(const ParamStore<float>& params, const std::filesystem::path& path);
void write_params(const ParamStore<float>& params, ContainerWriter& writer);
ParamStore<float> load_params(const std::filesystem::path& path);

// Bitwise digest over names, shapes and raw values.
std::uint64_t checksum(const ParamStore<float>& params);
std::uint64_t checksum(const ParamStore<float>& params, std::span<const std::string> names);

}  // namespace gfolds
