// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace gfolds {

// Counter-based generator: output i is a pure function of (key, i), so a
// stream can be re-created from its key alone and split into independent
// child streams by tag. Nothing here depends on <random> distributions,
// whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  // Child stream derived from this stream's key; does not advance *this.
  Rng split(std::uint64_t tag) const noexcept;
  Rng split(std::string_view tag) const noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept;
  double normal() noexcept;
  // Normal(0, stddev) resampled until |x| <= bound_sigmas * stddev.
  double truncated_normal(double stddev, double bound_sigmas = 2.0) noexcept;

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) noexcept
      : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t hash_string(std::string_view s) noexcept;

}  // namespace gfolds
