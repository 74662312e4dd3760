// SPDX-License-Identifier: Apache-2.0
#include "secloc/tdoa_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "secloc/errors.hpp"

namespace secloc {

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("solver.max_iters must be at least 1");
  if (!(damping_init > 0.0)) throw ConfigError("solver.damping_init must be positive");
  if (!(tol_step > 0.0)) throw ConfigError("solver.tol_step must be positive");
  if (init == InitStrategy::GridMultistart && grid_k < 1) throw ConfigError("solver.grid_k must be at least 1");
}

namespace {

struct Equation {
  Point2D anchor;
  double range_diff;  // c * dt
};

Point2D unit_from(Point2D p, Point2D a) {
  const double d = distance(p, a);
  if (d == 0.0) return {};
  return {(p.x - a.x) / d, (p.y - a.y) / d};
}

double cost(Point2D p, Point2D ref, std::span<const Equation> eqs) {
  double s = 0.0;
  for (const auto& e : eqs) {
    const double r = distance(p, e.anchor) - distance(p, ref) - e.range_diff;
    s += r * r;
  }
  return s;
}

bool collinear(std::span<const Point2D> pts) {
  if (pts.size() < 3) return true;
  // Largest triangle area relative to the squared span of the set.
  double span2 = 0.0;
  for (const auto& p : pts) span2 = std::max(span2, std::pow(distance(p, pts[0]), 2));
  for (std::size_t i = 1; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const Point2D u = pts[i] - pts[0];
      const Point2D v = pts[j] - pts[0];
      if (std::abs(u.x * v.y - u.y * v.x) > 1e-9 * span2) return false;
    }
  }
  return true;
}

struct RunResult {
  Point2D position;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool singular = true;
  double final_step = 0.0;
  std::vector<double> history;
};

RunResult levenberg_marquardt(Point2D start, Point2D ref, std::span<const Equation> eqs, const SolverConfig& cfg) {
  RunResult run;
  Point2D p = start;
  double f = cost(p, ref, eqs);
  double lambda = cfg.damping_init;
  run.history.push_back(f);
  for (int it = 0; it < cfg.max_iters; ++it) {
    run.iterations = it + 1;
    // Normal equations J^T J dp = -J^T r.
    double a11 = 0.0, a12 = 0.0, a22 = 0.0, g1 = 0.0, g2 = 0.0;
    const Point2D ur = unit_from(p, ref);
    for (const auto& e : eqs) {
      const Point2D ui = unit_from(p, e.anchor);
      const double jx = ui.x - ur.x;
      const double jy = ui.y - ur.y;
      const double r = distance(p, e.anchor) - distance(p, ref) - e.range_diff;
      a11 += jx * jx;
      a12 += jx * jy;
      a22 += jy * jy;
      g1 += jx * r;
      g2 += jy * r;
    }
    const double det_plain = a11 * a22 - a12 * a12;
    if (det_plain > 1e-12 * std::max(1.0, (a11 + a22) * (a11 + a22))) run.singular = false;
    if (f == 0.0) {
      run.converged = true;
      run.final_step = 0.0;
      break;
    }

    bool accepted = false;
    while (lambda < 1e16) {
      const double b11 = a11 + lambda * std::max(a11, 1e-12);
      const double b22 = a22 + lambda * std::max(a22, 1e-12);
      const double det = b11 * b22 - a12 * a12;
      if (!(std::abs(det) > 0.0)) {
        lambda *= 10.0;
        continue;
      }
      const Point2D step{(-g1 * b22 + g2 * a12) / det, (-g2 * b11 + g1 * a12) / det};
      const Point2D cand = p + step;
      const double fc = cost(cand, ref, eqs);
      if (fc <= f) {
        p = cand;
        f = fc;
        lambda = std::max(lambda / 10.0, 1e-12);
        run.final_step = std::hypot(step.x, step.y);
        run.history.push_back(f);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction at any damping: p is a stationary point to machine precision.
      run.converged = true;
      run.final_step = 0.0;
      break;
    }
    if (run.final_step <= cfg.tol_step) {
      run.converged = true;
      break;
    }
  }
  run.position = p;
  run.cost = f;
  return run;
}

}  // namespace

SolverResult solve_tdoa(const AnchorSet& anchors, int ref_id, std::span<const std::optional<double>> dts,
                        const SolverConfig& cfg, const PhysConsts& consts) {
  cfg.validate();
  if (dts.size() != anchors.size()) throw DimensionMismatch("dts must align with the anchor set");
  const Point2D ref = anchors.at(ref_id).position;

  std::vector<Equation> eqs;
  std::vector<Point2D> used{ref};
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (static_cast<int>(i) == ref_id || !dts[i]) continue;
    if (!std::isfinite(*dts[i])) throw PreconditionError("non-finite TDoA for anchor " + std::to_string(i));
    eqs.push_back({anchors[i].position, consts.c * *dts[i]});
    used.push_back(anchors[i].position);
  }
  if (eqs.size() < 2) {
    throw InsufficientAnchors("TDoA solve needs at least 2 residual equations, got " + std::to_string(eqs.size()));
  }

  Point2D centroid;
  for (const auto& u : used) centroid = centroid + u;
  centroid = centroid * (1.0 / static_cast<double>(used.size()));

  SolverResult result;
  result.position = centroid;
  if (collinear(used)) {
    result.singular_geometry = true;
    result.residual_norm = std::sqrt(cost(centroid, ref, eqs));
    return result;
  }

  std::vector<Point2D> starts;
  switch (cfg.init) {
    case InitStrategy::AnchorCentroid:
      starts.push_back(centroid);
      break;
    case InitStrategy::MinToaAnchor:
      starts.push_back(ref + (centroid - ref) * 0.1);
      break;
    case InitStrategy::CentroidAndAnchors:
      starts.push_back(centroid);
      for (const auto& u : used) starts.push_back(u + (centroid - u) * 0.1);
      break;
    case InitStrategy::GridMultistart: {
      double x0 = used[0].x, x1 = used[0].x, y0 = used[0].y, y1 = used[0].y;
      for (const auto& u : used) {
        x0 = std::min(x0, u.x);
        x1 = std::max(x1, u.x);
        y0 = std::min(y0, u.y);
        y1 = std::max(y1, u.y);
      }
      const int k = cfg.grid_k;
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          starts.push_back({x0 + (x1 - x0) * (i + 0.5) / k, y0 + (y1 - y0) * (j + 0.5) / k});
        }
      }
      break;
    }
  }

  RunResult best;
  bool all_singular = true;
  for (const auto& s : starts) {
    auto run = levenberg_marquardt(s, ref, eqs, cfg);
    all_singular = all_singular && run.singular;
    if (run.cost < best.cost) best = std::move(run);  // strict: earliest start wins ties
  }
  result.position = best.position;
  result.residual_norm = std::sqrt(best.cost);
  result.iterations = best.iterations;
  result.converged = best.converged && !all_singular;
  result.singular_geometry = all_singular;
  result.final_step = best.final_step;
  result.cost_history = std::move(best.history);
  return result;
}

std::vector<Point2D> tdoa_jacobian(Point2D p, const AnchorSet& anchors, int ref_id) {
  const Point2D ur = unit_from(p, anchors.at(ref_id).position);
  std::vector<Point2D> rows;
  for (const auto& a : anchors) {
    if (a.id == ref_id) continue;
    const Point2D ui = unit_from(p, a.position);
    rows.push_back({ui.x - ur.x, ui.y - ur.y});
  }
  return rows;
}

double jacobian_check(Point2D p, const AnchorSet& anchors, int ref_id) {
  for (const auto& a : anchors) {
    if (distance(p, a.position) < 1e-6) {
      throw PreconditionError("Jacobian check point coincides with anchor " + std::to_string(a.id));
    }
  }
  constexpr double h = 1e-5;
  const auto rows = tdoa_jacobian(p, anchors, ref_id);
  const Anchor& ref = anchors.at(ref_id);
  double worst = 0.0;
  std::size_t r = 0;
  for (const auto& a : anchors) {
    if (a.id == ref_id) continue;
    auto fd = [&](Point2D dp) {
      return (tdoa_residual(p + dp, a, ref, 0.0) - tdoa_residual(p - dp, a, ref, 0.0)) / (2.0 * h);
    };
    const double numeric[2] = {fd({h, 0.0}), fd({0.0, h})};
    const double analytic[2] = {rows[r].x, rows[r].y};
    for (int c = 0; c < 2; ++c) {
      const double scale = std::max({std::abs(analytic[c]), std::abs(numeric[c]), 1e-2});
      worst = std::max(worst, std::abs(analytic[c] - numeric[c]) / scale);
    }
    ++r;
  }
  return worst;
}

}  // namespace secloc
