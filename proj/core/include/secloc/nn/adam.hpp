// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "secloc/nn/param_store.hpp"

namespace secloc::nn {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::int64_t t = 0;

  static AdamState for_params(const ParamStore& params);
};

/// One bias-corrected Adam update. Throws ShapeMismatch if the layouts differ.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamHyper& hyper);

}  // namespace secloc::nn
