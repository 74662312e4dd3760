// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "secloc/geometry.hpp"

namespace secloc::nn {

struct HuberResult {
  double loss = 0.0;
  Point2D grad;  // d loss / d pred
};

/// Per-coordinate Huber with unit threshold, summed over x and y:
/// 0.5 e^2 when |e| < 1, |e| - 0.5 otherwise, with e = pred - truth in meters.
HuberResult huber_loss(Point2D pred, Point2D truth);

}  // namespace secloc::nn
