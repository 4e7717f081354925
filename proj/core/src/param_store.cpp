// SPDX-License-Identifier: Apache-2.0
#include "gfolds/param_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "gfolds/errors.hpp"
#include "gfolds/rng.hpp"

namespace gfolds {

template <class T>
BasicTensor<T>& ParamStore<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
  if (contains(name)) {
    throw ConfigError("param store: duplicate tensor name '" + name + "'");
  }
  index_.emplace(name, names_.size());
  names_.push_back(name);
  tensors_.push_back(BasicTensor<T>::from(std::move(shape), std::move(values), true));
  trainable_.push_back(true);
  return tensors_.back();
}

template <class T>
const BasicTensor<T>& ParamStore<T>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("param store: no tensor named '" + name + "'");
  }
  return tensors_[it->second];
}

template <class T>
BasicTensor<T>& ParamStore<T>::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("param store: no tensor named '" + name + "'");
  }
  return tensors_[it->second];
}

template <class T>
std::size_t ParamStore<T>::num_elements() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    n += t.numel();
  }
  return n;
}

template <class T>
void ParamStore<T>::set_trainable(const std::string& name, bool trainable) {
  get(name);
  trainable_[index_.at(name)] = trainable;
}

template <class T>
bool ParamStore<T>::trainable(const std::string& name) const {
  get(name);
  return trainable_[index_.at(name)];
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (trainable_[i]) {
      tensors_[i].zero_grad();
    } else {
      tensors_[i].clear_grad();
    }
  }
}

template <class T>
void ParamStore<T>::clear_grad() {
  for (auto& t : tensors_) {
    t.clear_grad();
  }
}

template <class T>
ParamStore<T> ParamStore<T>::clone() const {
  ParamStore out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto d = tensors_[i].data();
    out.add(names_[i], tensors_[i].shape(), std::vector<T>(d.begin(), d.end()));
    out.trainable_[i] = trainable_[i];
  }
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Returns false on clean EOF before the first byte; throws on a partial read.
template <class U>
bool get_le(std::istream& in, U& value, const char* what, bool eof_ok = false) {
  std::array<char, sizeof(U)> bytes{};
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  const auto got = in.gcount();
  if (got == 0 && eof_ok) {
    return false;
  }
  if (got != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("container truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  std::memcpy(&value, bytes.data(), sizeof(U));
  return true;
}

constexpr std::array<char, 4> kMagic = {'G', 'F', 'L', 'D'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLen = 1U << 16;

}  // namespace

ContainerWriter::ContainerWriter(std::ostream& out) : out_(out) {
  out_.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out_, kContainerVersion);
}

void ContainerWriter::write(const std::string& name, const Shape& shape,
                            std::span<const float> data) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("container: tensor '" + name + "' has shape " + shape_to_string(shape) +
                         " but " + std::to_string(data.size()) + " values");
  }
  put_le<std::uint32_t>(out_, static_cast<std::uint32_t>(name.size()));
  out_.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le<std::uint32_t>(out_, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t e : shape) {
    put_le<std::uint64_t>(out_, static_cast<std::uint64_t>(e));
  }
  for (float v : data) {
    put_le<std::uint32_t>(out_, std::bit_cast<std::uint32_t>(v));
  }
  if (!out_) {
    throw FormatError("container: write failed for tensor '" + name + "'");
  }
}

std::vector<NamedTensor> read_container(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) {
    throw FormatError("container: bad magic bytes (expected \"GFLD\")");
  }
  std::uint32_t version = 0;
  get_le(in, version, "version");
  if (version != kContainerVersion) {
    throw FormatError("container: unsupported format version " + std::to_string(version) +
                      " (expected " + std::to_string(kContainerVersion) + ")");
  }
  std::vector<NamedTensor> out;
  for (;;) {
    std::uint32_t name_len = 0;
    if (!get_le(in, name_len, "name length", true)) {
      break;
    }
    if (name_len > kMaxNameLen) {
      throw FormatError("container: implausible name length " + std::to_string(name_len));
    }
    NamedTensor t;
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) {
      throw FormatError("container truncated while reading tensor name");
    }
    std::uint32_t rank = 0;
    get_le(in, rank, "rank");
    if (rank > kMaxRank) {
      throw FormatError("container: tensor '" + t.name + "' has implausible rank " +
                        std::to_string(rank));
    }
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t e = 0;
      get_le(in, e, "extent");
      t.shape.push_back(static_cast<std::size_t>(e));
    }
    t.data.resize(shape_numel(t.shape));
    for (auto& v : t.data) {
      std::uint32_t bits = 0;
      get_le(in, bits, "tensor data");
      v = std::bit_cast<float>(bits);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("container: cannot open " + path.string());
  }
  return read_container(in);
}

void write_params(const ParamStore<float>& params, ContainerWriter& writer) {
  for (const auto& name : params.names()) {
    const auto& t = params.get(name);
    writer.write(name, t.shape(), t.data());
  }
}

void save_params(const ParamStore<float>& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("container: cannot create " + path.string());
  }
  ContainerWriter writer(out);
  write_params(params, writer);
}

ParamStore<float> load_params(const std::filesystem::path& path) {
  ParamStore<float> params;
  for (auto& t : read_container(path)) {
    params.add(t.name, std::move(t.shape), std::move(t.data));
  }
  return params;
}

std::uint64_t checksum(const ParamStore<float>& params, std::span<const std::string> names) {
  std::uint64_t h = 0x1234567887654321ULL;
  for (const auto& name : names) {
    h = mix64(h ^ hash_string(name));
    const auto& t = params.get(name);
    for (std::size_t e : t.shape()) {
      h = mix64(h ^ e);
    }
    for (float v : t.data()) {
      h = mix64(h ^ std::bit_cast<std::uint32_t>(v));
    }
  }
  return h;
}

std::uint64_t checksum(const ParamStore<float>& params) {
  return checksum(params, params.names());
}

}  // namespace gfolds
