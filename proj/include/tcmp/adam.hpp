#pragma once

#include <cmath>
#include <vector>

#include "tcmp/autograd.hpp"
#include "tcmp/errors.hpp"

namespace tcmp {

// Adam with bias correction and no weight decay. Moment buffers are indexed
// by parameter position, so the parameter list must be stable across steps.
template <typename T>
struct AdamState {
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<Parameter<T>>& params) {
    m.clear();
    v.clear();
    for (const Parameter<T>& p : params) {
      m.emplace_back(p.value.numel(), T{0});
      v.emplace_back(p.value.numel(), T{0});
    }
    step_count = 0;
  }
};

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size()) {
    throw InvalidState("adam_step: state not initialized for this parameter list");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable) continue;
    auto& mp = state.m[p];
    auto& vp = state.v[p];
    auto& val = params[p].value.data;
    const auto& g = params[p].grad.data;
    for (size_t i = 0; i < val.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = state.beta1 * static_cast<double>(mp[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(vp[i]) + (1.0 - state.beta2) * gi * gi;
      mp[i] = static_cast<T>(mi);
      vp[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      val[i] -= static_cast<T>(state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

}  // namespace tcmp
