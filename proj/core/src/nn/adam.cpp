// SPDX-License-Identifier: Apache-2.0
#include "secloc/nn/adam.hpp"

#include <cmath>

#include "secloc/errors.hpp"

namespace secloc::nn {

AdamState AdamState::for_params(const ParamStore& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamHyper& hyper) {
  if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v)) {
    throw ShapeMismatch("adam_step: parameter, gradient and moment layouts differ");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const double* g = grads[i].data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      p[k] -= hyper.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + hyper.eps);
    }
  }
}

}  // namespace secloc::nn
