#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ldesign/error.hpp"

namespace ldesign::numerics {

/// Adam with bias correction. Moment vectors start at zero.
struct AdamState {
  explicit AdamState(std::size_t n, double lr = 1e-3, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8)
      : m(n, 0.0), v(n, 0.0), lr(lr), beta1(beta1), beta2(beta2), eps(eps) {}

  std::vector<double> m, v;
  long step = 0;
  double lr, beta1, beta2, eps;
};

inline void adam_step(AdamState& state, std::span<double> params,
                      std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw Error(ErrorKind::Shape, "adam_step: length mismatch");
  for (double g : grads)
    if (!std::isfinite(g))
      throw Error(ErrorKind::NumericalOverflow, "adam_step: non-finite gradient");
  ++state.step;
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    double mhat = state.m[i] / c1;
    double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace ldesign::numerics
