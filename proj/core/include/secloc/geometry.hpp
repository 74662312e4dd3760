// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace secloc {

inline constexpr double kSpeedOfLight = 299792458.0;

struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
  Point2D operator+(Point2D o) const { return {x + o.x, y + o.y}; }
  Point2D operator-(Point2D o) const { return {x - o.x, y - o.y}; }
  Point2D operator*(double s) const { return {x * s, y * s}; }
};

bool is_finite(Point2D p);

struct Anchor {
  int id = 0;
  Point2D position;
  double height = 0.0;  // metadata only, geometry is 2D

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Ordered anchor layout. Ids are 0..N-1 in order, positions distinct and finite.
class AnchorSet {
 public:
  AnchorSet() = default;
  explicit AnchorSet(std::vector<Anchor> anchors);

  std::size_t size() const noexcept { return anchors_.size(); }
  const Anchor& operator[](std::size_t i) const { return anchors_[i]; }
  const Anchor& at(int id) const;
  bool contains(int id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < anchors_.size(); }
  std::span<const Anchor> anchors() const noexcept { return anchors_; }
  auto begin() const noexcept { return anchors_.begin(); }
  auto end() const noexcept { return anchors_.end(); }

  Point2D centroid() const;

  friend bool operator==(const AnchorSet&, const AnchorSet&) = default;

 private:
  std::vector<Anchor> anchors_;
};

struct PhysConsts {
  double c = kSpeedOfLight;
};

/// Euclidean distance in meters.
double distance(Point2D p, Point2D q);

/// Line-of-sight propagation delay from `loc` to the anchor, in seconds.
double true_toa(Point2D loc, const Anchor& anchor, const PhysConsts& consts = {});

/// Range-difference residual of one TDoA equation, in meters:
/// (|p - a_i| - |p - a_ref|) - c * dt.
double tdoa_residual(Point2D candidate, const Anchor& anchor_i, const Anchor& anchor_ref, double dt,
                     const PhysConsts& consts = {});

nlohmann::json anchors_to_json(const AnchorSet& anchors);
AnchorSet anchors_from_json(const nlohmann::json& doc);
void save_anchors(const std::filesystem::path& path, const AnchorSet& anchors);
AnchorSet load_anchors(const std::filesystem::path& path);

/// Axis-aligned rectangle, min corner inclusive.
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool contains(Point2D p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  bool contains(const Rect& r) const { return r.x0 >= x0 && r.x1 <= x1 && r.y0 >= y0 && r.y1 <= y1; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Point2D center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  Point2D clamp(Point2D p) const { return {std::clamp(p.x, x0, x1), std::clamp(p.y, y0, y1)}; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

}  // namespace secloc
