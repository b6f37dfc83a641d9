// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "ramen/train.hpp"

namespace ramen::train {

void Schedule::validate() const {
  if (warmup_epochs == 0 || plateau_until_epoch < warmup_epochs || decay_every == 0) {
    throw std::invalid_argument(
        "schedule: need warmup_epochs > 0, plateau_until_epoch >= warmup_epochs, decay_every > 0");
  }
  if (!(warmup_rate > 0 && lr_scale > 0 && plateau_lr > 0 && decay_factor > 0)) {
    throw std::invalid_argument("schedule: rates and factors must be positive");
  }
}

double lr_at_epoch(const Schedule& s, std::size_t epoch) {
  if (epoch == 0) throw std::invalid_argument("lr_at_epoch: epochs are 1-based");
  if (epoch <= s.warmup_epochs) return s.warmup_rate * static_cast<double>(epoch) / s.lr_scale;
  if (epoch <= s.plateau_until_epoch) return s.plateau_lr;
  const std::size_t decays = (epoch - s.plateau_until_epoch + s.decay_every - 1) / s.decay_every;
  double lr = s.plateau_lr;
  for (std::size_t i = 0; i < decays; ++i) lr *= s.decay_factor;
  return lr;
}

template <typename T>
AdamaxState<T> adamax_init(const nn::NamedTensors<T>& params, AdamaxConfig config) {
  AdamaxState<T> s;
  s.config = config;
  for (const auto& [name, p] : params) {
    s.m.emplace_back(p.numel(), T(0));
    s.u.emplace_back(p.numel(), T(0));
  }
  return s;
}

template <typename T>
void adamax_step(AdamaxState<T>& state, const nn::NamedTensors<T>& params, double lr) {
  if (state.m.size() != params.size() || state.u.size() != params.size()) {
    throw std::invalid_argument("adamax_step: optimizer state holds " +
                                std::to_string(state.m.size()) + " tensors for " +
                                std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (state.m[i].size() != p.numel() || state.u[i].size() != p.numel()) {
      throw DimensionError("adamax_step: state size mismatch for " + name);
    }
    if (!p.has_grad()) continue;
    for (T g : p.grad())
      if (!std::isfinite(g)) throw NumericError("adamax_step: non-finite gradient in " + name);
  }

  state.t += 1;
  const auto& c = state.config;
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T eps = static_cast<T>(c.eps);
  const T step = static_cast<T>(lr / (1.0 - std::pow(c.beta1, static_cast<double>(state.t))));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].second;
    auto& m = state.m[i];
    auto& u = state.u[i];
    auto theta = p.data();
    const bool has = p.has_grad();
    const auto g = has ? p.grad() : std::span<const T>();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const T gk = has ? g[k] : T(0);
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      u[k] = std::max(b2 * u[k], std::abs(gk));
      theta[k] -= step * m[k] / (u[k] + eps);
    }
  }
}

template AdamaxState<float> adamax_init(const nn::NamedTensors<float>&, AdamaxConfig);
template AdamaxState<double> adamax_init(const nn::NamedTensors<double>&, AdamaxConfig);
template void adamax_step(AdamaxState<float>&, const nn::NamedTensors<float>&, double);
template void adamax_step(AdamaxState<double>&, const nn::NamedTensors<double>&, double);

}  // namespace ramen::train
