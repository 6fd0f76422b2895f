#include <tabletop/geometry.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tabletop {

namespace {

using nlohmann::json;

constexpr double kAxisTolerance = 1e-9;

Vec3 vec3_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("convention field '" + field +
                                "' must be an array of 3 numbers");
  }
  for (const auto& v : j) {
    if (!v.is_number()) {
      throw std::invalid_argument("convention field '" + field +
                                  "' must contain only numbers");
    }
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vec3_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::string to_string(SpatialSpecifier s) {
  switch (s) {
    case SpatialSpecifier::OnTop: return "on top";
    case SpatialSpecifier::NextTo: return "next to";
    case SpatialSpecifier::Left: return "left";
    case SpatialSpecifier::Right: return "right";
    case SpatialSpecifier::Near: return "near";
    case SpatialSpecifier::Inside: return "inside";
    case SpatialSpecifier::InFront: return "in front";
    case SpatialSpecifier::Behind: return "behind";
  }
  throw std::invalid_argument("unknown spatial specifier");
}

std::string to_key(SpatialSpecifier s) {
  switch (s) {
    case SpatialSpecifier::OnTop: return "on_top";
    case SpatialSpecifier::NextTo: return "next_to";
    case SpatialSpecifier::Left: return "left";
    case SpatialSpecifier::Right: return "right";
    case SpatialSpecifier::Near: return "near";
    case SpatialSpecifier::Inside: return "inside";
    case SpatialSpecifier::InFront: return "in_front";
    case SpatialSpecifier::Behind: return "behind";
  }
  throw std::invalid_argument("unknown spatial specifier");
}

std::optional<SpatialSpecifier> specifier_from_key(const std::string& key) {
  for (SpatialSpecifier s : kAllSpecifiers) {
    if (to_key(s) == key) return s;
  }
  return std::nullopt;
}

bool is_directional(SpatialSpecifier s) {
  return s == SpatialSpecifier::Left || s == SpatialSpecifier::Right ||
         s == SpatialSpecifier::InFront || s == SpatialSpecifier::Behind;
}

bool is_mounting(SpatialSpecifier s) {
  return s == SpatialSpecifier::OnTop || s == SpatialSpecifier::Inside;
}

Vec3 AxisConvention::direction(SpatialSpecifier s) const {
  switch (s) {
    case SpatialSpecifier::Left: return left;
    case SpatialSpecifier::Right: return right;
    case SpatialSpecifier::InFront: return in_front;
    case SpatialSpecifier::Behind: return behind;
    default:
      throw std::invalid_argument("no horizontal direction for specifier '" +
                                  to_key(s) + "'");
  }
}

void AxisConvention::validate() const {
  auto check_unit = [](const Vec3& v, const char* name) {
    if (std::abs(v.norm() - 1.0) > kAxisTolerance) {
      throw std::invalid_argument(std::string("convention axis '") + name +
                                  "' is not unit length");
    }
  };
  check_unit(left, "left");
  check_unit(right, "right");
  check_unit(in_front, "in_front");
  check_unit(behind, "behind");
  check_unit(up, "up");

  if ((left + right).norm() > kAxisTolerance) {
    throw std::invalid_argument("'left' and 'right' must be antiparallel");
  }
  if ((in_front + behind).norm() > kAxisTolerance) {
    throw std::invalid_argument("'in_front' and 'behind' must be antiparallel");
  }
  if (std::abs(up.x()) > kAxisTolerance || std::abs(up.y()) > kAxisTolerance ||
      std::abs(std::abs(up.z()) - 1.0) > kAxisTolerance) {
    throw std::invalid_argument("'up' must be aligned with the +Z or -Z axis");
  }
  for (const auto* axis : {&left, &in_front}) {
    if (std::abs(axis->dot(up)) > kAxisTolerance) {
      throw std::invalid_argument(
          "horizontal axes must be orthogonal to 'up'");
    }
  }
  if (scan_order.empty()) {
    throw std::invalid_argument("scan_order must not be empty");
  }
  for (SpatialSpecifier s : scan_order) {
    if (!is_directional(s)) {
      throw std::invalid_argument("scan_order entry '" + to_key(s) +
                                  "' is not a directional specifier");
    }
  }
  if (!std::isfinite(surface_height)) {
    throw std::invalid_argument("surface_height must be finite");
  }
}

AxisConvention load_convention(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("convention is not valid JSON: ") +
                                e.what());
  }
  if (!doc.is_object()) {
    throw std::invalid_argument("convention document must be a JSON object");
  }

  AxisConvention c;
  if (doc.contains("left")) c.left = vec3_from(doc["left"], "left");
  if (doc.contains("right")) c.right = vec3_from(doc["right"], "right");
  if (doc.contains("in_front")) c.in_front = vec3_from(doc["in_front"], "in_front");
  if (doc.contains("behind")) c.behind = vec3_from(doc["behind"], "behind");
  if (doc.contains("on_top")) c.up = vec3_from(doc["on_top"], "on_top");
  if (doc.contains("surface_height")) {
    if (!doc["surface_height"].is_number()) {
      throw std::invalid_argument("'surface_height' must be a number");
    }
    c.surface_height = doc["surface_height"].get<double>();
  }
  if (doc.contains("scan_order")) {
    if (!doc["scan_order"].is_array()) {
      throw std::invalid_argument("'scan_order' must be an array of specifier keys");
    }
    c.scan_order.clear();
    for (const auto& entry : doc["scan_order"]) {
      if (!entry.is_string()) {
        throw std::invalid_argument("'scan_order' entries must be strings");
      }
      auto s = specifier_from_key(entry.get<std::string>());
      if (!s) {
        throw std::invalid_argument("'scan_order' names unknown specifier '" +
                                    entry.get<std::string>() + "'");
      }
      c.scan_order.push_back(*s);
    }
  }
  c.validate();
  return c;
}

AxisConvention load_convention_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open convention file: " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return load_convention(buf.str());
}

std::string save_convention(const AxisConvention& c) {
  json doc;
  doc["left"] = vec3_to(c.left);
  doc["right"] = vec3_to(c.right);
  doc["in_front"] = vec3_to(c.in_front);
  doc["behind"] = vec3_to(c.behind);
  doc["on_top"] = vec3_to(c.up);
  doc["surface_height"] = c.surface_height;
  json order = json::array();
  for (SpatialSpecifier s : c.scan_order) order.push_back(to_key(s));
  doc["scan_order"] = order;
  return doc.dump(2) + "\n";
}

WorldParams world_params_from(const AxisConvention& c) {
  WorldParams p;
  p.surface_height = c.surface_height;
  p.up_sign = c.up.z() >= 0.0 ? 1.0 : -1.0;
  return p;
}

}  // namespace tabletop
