#pragma once

#include <tabletop/geometry.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabletop {

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Pose6D {
  Vec3 translation = Vec3::Zero();
  Quat orientation = Quat::Identity();

  bool operator==(const Pose6D& other) const {
    return translation == other.translation &&
           orientation.coeffs() == other.orientation.coeffs();
  }
};

struct SceneObject {
  std::string id;
  Pose6D pose;
  double diameter = 0.0;  // bounding sphere

  double radius() const { return diameter / 2.0; }

  bool operator==(const SceneObject& other) const {
    return id == other.id && pose == other.pose && diameter == other.diameter;
  }
};

struct HeldObject {
  std::string id;
  double diameter = 0.0;

  bool operator==(const HeldObject& other) const {
    return id == other.id && diameter == other.diameter;
  }
};

// Stacked/contained pairs are exempt from the pairwise non-overlap invariant;
// they are also what on_top / inside goal checks look up.
enum class MountKind { Stacked, Contained };

struct MountRecord {
  std::string object;  // the mounted thing
  std::string base;    // what it sits on / in
  MountKind kind = MountKind::Stacked;

  bool operator==(const MountRecord& other) const {
    return object == other.object && base == other.base && kind == other.kind;
  }
};

struct TableBounds {
  Vec2 min{-0.5, -0.5};
  Vec2 max{0.5, 0.5};

  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
           p.y() <= max.y();
  }
  double width() const { return max.x() - min.x(); }
  double height() const { return max.y() - min.y(); }
  void validate() const;  // throws SceneError when min >= max on an axis

  bool operator==(const TableBounds& other) const {
    return min == other.min && max == other.max;
  }
};

// Value type: world operations take a Scene and return a new one.
struct Scene {
  TableBounds table_bounds;
  std::vector<SceneObject> objects;        // placed objects, document order
  std::optional<HeldObject> held;          // at most one object in the gripper
  std::vector<MountRecord> mounts;

  const SceneObject* find(const std::string& id) const;
  bool has_object(const std::string& id) const { return find(id) != nullptr; }

  std::optional<MountKind> mount_kind(const std::string& object,
                                      const std::string& base) const;
  // Transitive closure of mount edges touching any seed, excluding the seeds
  // themselves. Used to exempt a whole stack from collision checks.
  std::vector<std::string> mount_component(
      const std::vector<std::string>& seeds) const;

  // Invariants: unique non-empty ids, positive diameters, finite poses,
  // near-unit quaternions, placed centers within table bounds, and pairwise
  // horizontal non-overlap beyond params.overlap_tolerance for non-mounted
  // pairs. Throws SceneError naming the offending object or pair.
  void validate(const WorldParams& params = {}) const;

  bool operator==(const Scene& other) const {
    return table_bounds == other.table_bounds && objects == other.objects &&
           held == other.held && mounts == other.mounts;
  }
};

// Parses a scene document (JSON). Throws SceneError with the offending field
// on missing keys, wrong types, bad quaternion norm, or out-of-bounds objects.
Scene load_scene(const std::string& document);
Scene load_scene_file(const std::string& path);
std::string save_scene(const Scene& scene);

}  // namespace tabletop
