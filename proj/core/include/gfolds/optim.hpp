// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfolds/param_store.hpp"

namespace gfolds {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

// AdamW with decoupled weight decay: the decay multiplies the parameter
// directly and never enters the moment estimates.
template <class T>
class AdamW {
 public:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };

  explicit AdamW(AdamWConfig config = {});

  // One update of every trainable tensor in `params`. Throws
  // IntegrityError if a trainable tensor carries no gradient.
  void step(ParamStore<T>& params, double lr);

  const AdamWConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_; }
  const std::unordered_map<std::string, Moments>& moments() const noexcept { return moments_; }

  // Restores state saved by a checkpoint.
  void restore(std::uint64_t step, std::unordered_map<std::string, Moments> moments);

 private:
  AdamWConfig config_;
  std::uint64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace gfolds
