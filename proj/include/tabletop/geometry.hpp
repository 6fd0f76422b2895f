#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace tabletop {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Spatial relations the placer understands, in report row order.
enum class SpatialSpecifier {
  OnTop,
  NextTo,
  Left,
  Right,
  Near,
  Inside,
  InFront,
  Behind,
};

inline constexpr std::array<SpatialSpecifier, 8> kAllSpecifiers = {
    SpatialSpecifier::OnTop,  SpatialSpecifier::NextTo, SpatialSpecifier::Left,
    SpatialSpecifier::Right,  SpatialSpecifier::Near,   SpatialSpecifier::Inside,
    SpatialSpecifier::InFront, SpatialSpecifier::Behind,
};

// Human label, e.g. "on top", "next to".
std::string to_string(SpatialSpecifier s);
// Stable key used in JSON files, e.g. "on_top", "next_to".
std::string to_key(SpatialSpecifier s);
std::optional<SpatialSpecifier> specifier_from_key(const std::string& key);

bool is_directional(SpatialSpecifier s);  // left / right / in_front / behind
bool is_mounting(SpatialSpecifier s);     // on_top / inside

// Maps relation words to world directions. The table frame is configuration,
// not ground truth: a scene viewed from the opposite side swaps every
// horizontal direction, so conventions load from JSON and everything
// downstream takes one as a parameter.
struct AxisConvention {
  Vec3 left{1.0, 0.0, 0.0};
  Vec3 right{-1.0, 0.0, 0.0};
  Vec3 in_front{0.0, -1.0, 0.0};
  Vec3 behind{0.0, 1.0, 0.0};
  Vec3 up{0.0, 0.0, -1.0};  // direction of "on top"
  double surface_height = 0.0;  // table plane, measured along `up`
  // Directions tried, in order, when resolving next_to / near.
  std::vector<SpatialSpecifier> scan_order{
      SpatialSpecifier::Left, SpatialSpecifier::Right, SpatialSpecifier::InFront,
      SpatialSpecifier::Behind};

  // Horizontal unit direction for a directional specifier. Throws
  // std::invalid_argument for non-directional specifiers.
  Vec3 direction(SpatialSpecifier s) const;

  // Height of a point above the table plane, measured along `up`.
  double height_of(const Vec3& p) const { return p.dot(up); }

  // Vertical (z) coordinate of a sphere center of the given radius resting on
  // the table surface.
  double resting_z(double radius) const {
    return up.z() * (surface_height + radius);
  }

  // Throws std::invalid_argument when the axes are not unit length, the
  // left/right and in_front/behind pairs are not antiparallel, `up` is not
  // aligned with +-Z, the horizontal axes are not orthogonal to `up`, or the
  // scan order names a non-directional specifier.
  void validate() const;
};

AxisConvention load_convention(const std::string& json_text);
AxisConvention load_convention_file(const std::string& path);
std::string save_convention(const AxisConvention& c);

// Tunables for the simulated tabletop operations.
struct WorldParams {
  double overlap_tolerance = 0.005;  // meters of allowed sphere interpenetration
  double free_space_margin = 0.020;  // extra clearance required by release
  double surface_height = 0.0;       // table plane along the up axis
  double up_sign = -1.0;             // z component of the up axis (+1 or -1)

  double resting_z(double radius) const {
    return up_sign * (surface_height + radius);
  }
};

// Keeps the world's vertical bookkeeping consistent with a convention.
WorldParams world_params_from(const AxisConvention& c);

// Tunables for the placement resolver.
struct PlacerParams {
  double placement_margin = 0.02;   // gap left between placed and target spheres
  double near_factor = 3.0;         // near uses near_factor * placement_margin
  double validation_radius = 0.30;  // max distance of an LLM reply from the target
};

}  // namespace tabletop
