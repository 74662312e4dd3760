// SPDX-License-Identifier: Apache-2.0
#include "secloc/geometry.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "secloc/errors.hpp"

namespace secloc {

bool is_finite(Point2D p) { return std::isfinite(p.x) && std::isfinite(p.y); }

AnchorSet::AnchorSet(std::vector<Anchor> anchors) : anchors_(std::move(anchors)) {
  std::set<std::pair<double, double>> seen;
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    const Anchor& a = anchors_[i];
    if (a.id != static_cast<int>(i)) {
      throw SchemaError("anchor ids must be 0..N-1 in order; found id " + std::to_string(a.id) +
                        " at index " + std::to_string(i));
    }
    if (!is_finite(a.position) || !std::isfinite(a.height)) {
      throw SchemaError("anchor " + std::to_string(a.id) + " has a non-finite coordinate");
    }
    if (!seen.emplace(a.position.x, a.position.y).second) {
      throw SchemaError("anchor " + std::to_string(a.id) + " shares its position with another anchor");
    }
  }
}

const Anchor& AnchorSet::at(int id) const {
  if (!contains(id)) throw SchemaError("unknown anchor id " + std::to_string(id));
  return anchors_[static_cast<std::size_t>(id)];
}

Point2D AnchorSet::centroid() const {
  Point2D c;
  if (anchors_.empty()) return c;
  for (const auto& a : anchors_) c = c + a.position;
  return c * (1.0 / static_cast<double>(anchors_.size()));
}

double distance(Point2D p, Point2D q) { return std::hypot(p.x - q.x, p.y - q.y); }

double true_toa(Point2D loc, const Anchor& anchor, const PhysConsts& consts) {
  return distance(loc, anchor.position) / consts.c;
}

double tdoa_residual(Point2D candidate, const Anchor& anchor_i, const Anchor& anchor_ref, double dt,
                     const PhysConsts& consts) {
  return (distance(candidate, anchor_i.position) - distance(candidate, anchor_ref.position)) - consts.c * dt;
}

nlohmann::json anchors_to_json(const AnchorSet& anchors) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& a : anchors) {
    list.push_back({{"id", a.id}, {"x", a.position.x}, {"y", a.position.y}, {"height", a.height}});
  }
  return {{"anchors", std::move(list)}};
}

AnchorSet anchors_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("anchors") || !doc["anchors"].is_array()) {
    throw SchemaError("anchor document must be an object with an \"anchors\" array");
  }
  std::vector<Anchor> anchors;
  for (const auto& item : doc["anchors"]) {
    try {
      Anchor a;
      a.id = item.at("id").get<int>();
      a.position = {item.at("x").get<double>(), item.at("y").get<double>()};
      a.height = item.value("height", 0.0);
      anchors.push_back(a);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed anchor entry: ") + e.what());
    }
  }
  return AnchorSet(std::move(anchors));
}

void save_anchors(const std::filesystem::path& path, const AnchorSet& anchors) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << anchors_to_json(anchors).dump(2) << '\n';
}

AnchorSet load_anchors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(0, path.string() + ": " + e.what());
  }
  return anchors_from_json(doc);
}

}  // namespace secloc
