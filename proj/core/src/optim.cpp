// SPDX-License-Identifier: Apache-2.0
#include "gfolds/optim.hpp"

#include <cmath>

#include "gfolds/errors.hpp"

namespace gfolds {

template <class T>
AdamW<T>::AdamW(AdamWConfig config) : config_(config) {
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0) {
    throw ConfigError("adamw: betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0) || config_.weight_decay < 0.0) {
    throw ConfigError("adamw: eps must be positive and weight decay non-negative");
  }
}

template <class T>
void AdamW<T>::step(ParamStore<T>& params, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("adamw: learn rate must be finite and non-negative");
  }
  for (const auto& name : params.names()) {
    if (params.trainable(name) && !params.get(name).has_grad()) {
      throw IntegrityError("adamw: trainable parameter '" + name + "' has no gradient");
    }
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (const auto& name : params.names()) {
    if (!params.trainable(name)) {
      continue;
    }
    auto& p = params.get(name);
    auto& mom = moments_[name];
    if (mom.m.size() != p.numel()) {
      mom.m.assign(p.numel(), T{0});
      mom.v.assign(p.numel(), T{0});
    }
    auto data = p.mutable_data();
    const auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double m = b1 * static_cast<double>(mom.m[i]) + (1.0 - b1) * g;
      const double v = b2 * static_cast<double>(mom.v[i]) + (1.0 - b2) * g * g;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      const double update = (m / c1) / (std::sqrt(v / c2) + config_.eps);
      data[i] = static_cast<T>(static_cast<double>(data[i]) * decay - lr * update);
    }
  }
}

template <class T>
void AdamW<T>::restore(std::uint64_t step, std::unordered_map<std::string, Moments> moments) {
  step_ = step;
  moments_ = std::move(moments);
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace gfolds
