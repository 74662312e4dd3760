// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "secloc/geometry.hpp"

namespace secloc {

enum class InitStrategy {
  CentroidAndAnchors,  // centroid plus every anchor (pulled slightly toward the centroid)
  AnchorCentroid,
  MinToaAnchor,
  GridMultistart,      // grid_k x grid_k starts over the anchor bounding box
};

struct SolverConfig {
  int max_iters = 50;
  double damping_init = 1e-3;
  double tol_step = 1e-6;  // meters
  InitStrategy init = InitStrategy::CentroidAndAnchors;
  int grid_k = 3;

  void validate() const;
};

struct SolverResult {
  Point2D position;
  double residual_norm = 0.0;  // meters, sqrt of the sum of squared residuals
  int iterations = 0;
  bool converged = false;
  bool singular_geometry = false;
  double final_step = 0.0;
  std::vector<double> cost_history;  // objective after each accepted step of the winning start
};

/// Levenberg-Marquardt solve of |p - a_i| - |p - a_ref| = c * dt_i over every anchor with a value.
/// `dts` is aligned with `anchors`; anchors without a value are left out of the residual set.
/// Throws InsufficientAnchors with fewer than two residual equations.
SolverResult solve_tdoa(const AnchorSet& anchors, int ref_id, std::span<const std::optional<double>> dts,
                        const SolverConfig& cfg = {}, const PhysConsts& consts = {});

/// Analytic TDoA Jacobian rows d r_i / d p for every non-reference anchor, in anchor order.
std::vector<Point2D> tdoa_jacobian(Point2D p, const AnchorSet& anchors, int ref_id);

/// Max relative discrepancy between the analytic Jacobian and central differences (step 1e-5 m).
/// Throws PreconditionError when p is within 1e-6 m of an anchor.
double jacobian_check(Point2D p, const AnchorSet& anchors, int ref_id);

}  // namespace secloc
