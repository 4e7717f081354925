// SPDX-License-Identifier: Apache-2.0
#include "gfolds/rng.hpp"

#include <cmath>
#include <numbers>

namespace gfolds {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitSalt = 0xD1B54A32D192ED03ULL;
}  // namespace

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// FNV-1a
std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed + kGolden)) {}

Rng Rng::split(std::uint64_t tag) const noexcept {
  return Rng(mix64(key_ ^ mix64(tag * kGolden + kSplitSalt)), 0, 0);
}

Rng Rng::split(std::string_view tag) const noexcept {
  return split(hash_string(tag));
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c * kGolden + 1));
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) {
    x = next_u64();
  }
  return x % n;
}

bool Rng::bernoulli(double p) noexcept { return uniform() < p; }

double Rng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev, double bound_sigmas) noexcept {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound_sigmas) {
      return z * stddev;
    }
  }
}

}  // namespace gfolds
