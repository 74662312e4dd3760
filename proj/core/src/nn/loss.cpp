// SPDX-License-Identifier: Apache-2.0
#include "secloc/nn/loss.hpp"

#include <cmath>

namespace secloc::nn {

namespace {

void huber_1d(double e, double& loss, double& grad) {
  if (std::abs(e) < 1.0) {
    loss += 0.5 * e * e;
    grad = e;
  } else {
    loss += std::abs(e) - 0.5;
    grad = e > 0.0 ? 1.0 : -1.0;
  }
}

}  // namespace

HuberResult huber_loss(Point2D pred, Point2D truth) {
  HuberResult r;
  huber_1d(pred.x - truth.x, r.loss, r.grad.x);
  huber_1d(pred.y - truth.y, r.loss, r.grad.y);
  return r;
}

}  // namespace secloc::nn
