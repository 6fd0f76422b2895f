#include <tabletop/world.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace tabletop {

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double horizontal_distance(const Vec3& a, const Vec3& b) {
  return (Vec2(a.x(), a.y()) - Vec2(b.x(), b.y())).norm();
}

}  // namespace

std::string object_list(const Scene& scene) {
  std::string out = "[";
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i > 0) out += ", ";
    out += "'" + scene.objects[i].id + "'";
  }
  out += "]";
  return out;
}

WorldResult pick(const Scene& scene, const std::string& id) {
  if (scene.held) {
    return {scene,
            "Cannot pick " + id + ": you are already holding " + scene.held->id,
            false};
  }
  const SceneObject* obj = scene.find(id);
  if (!obj) {
    return {scene, "Cannot pick " + id + ": it is not in the scene", false};
  }

  Scene next = scene;
  next.held = HeldObject{obj->id, obj->diameter};
  next.objects.erase(
      std::remove_if(next.objects.begin(), next.objects.end(),
                     [&](const SceneObject& o) { return o.id == id; }),
      next.objects.end());
  // Whatever was stacked on or under it is no longer attached.
  next.mounts.erase(
      std::remove_if(next.mounts.begin(), next.mounts.end(),
                     [&](const MountRecord& m) {
                       return m.object == id || m.base == id;
                     }),
      next.mounts.end());
  return {std::move(next), "You have picked up " + id, true};
}

WorldResult place_at(const Scene& scene, const PlacementRequest& request,
                     const WorldParams& params) {
  if (!scene.held) {
    return {scene, "You are not holding any object", false};
  }
  const HeldObject held = *scene.held;

  // Mounting placements live inside their target's footprint: the targets and
  // anything already mounted with them are exempt from collision, and the
  // stack's own bounds membership stands in for the candidate's.
  std::set<std::string> exempt;
  std::vector<std::string> present_targets;
  bool mounting = is_mounting(request.relation);
  if (mounting) {
    for (const auto& t : request.targets) {
      if (scene.has_object(t)) present_targets.push_back(t);
    }
    for (const auto& t : present_targets) exempt.insert(t);
    for (const auto& e : scene.mount_component(present_targets)) {
      exempt.insert(e);
    }
  }

  bool in_bounds;
  if (mounting && !present_targets.empty()) {
    in_bounds = std::any_of(
        present_targets.begin(), present_targets.end(), [&](const auto& t) {
          const SceneObject* o = scene.find(t);
          return o && scene.table_bounds.contains(
                          Vec2(o->pose.translation.x(), o->pose.translation.y()));
        });
  } else {
    in_bounds = scene.table_bounds.contains(
        Vec2(request.position.x(), request.position.y()));
  }
  if (!in_bounds) {
    return {scene,
            "Cannot place " + held.id + ": the position (" +
                fmt2(request.position.x()) + ", " + fmt2(request.position.y()) +
                ") is outside the table bounds",
            false};
  }

  const SceneObject* offender = nullptr;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& o : scene.objects) {
    if (exempt.count(o.id)) continue;
    double dist = horizontal_distance(request.position, o.pose.translation);
    double min_dist = held.diameter / 2.0 + o.radius() - params.overlap_tolerance;
    if (dist < min_dist && dist < worst) {
      offender = &o;
      worst = dist;
    }
  }
  if (offender) {
    return {scene,
            "Cannot place " + held.id + ": it would collide with " + offender->id,
            false};
  }

  Scene next = scene;
  SceneObject placed;
  placed.id = held.id;
  placed.pose.translation = request.position;
  placed.diameter = held.diameter;
  next.objects.push_back(std::move(placed));
  next.held.reset();
  if (mounting) {
    MountKind kind = request.relation == SpatialSpecifier::Inside
                         ? MountKind::Contained
                         : MountKind::Stacked;
    std::set<std::string> targeted(present_targets.begin(),
                                   present_targets.end());
    for (const auto& t : present_targets) {
      next.mounts.push_back({held.id, t, kind});
    }
    // Joining an existing stack couples the newcomer to every member, not
    // just the named target, so the pairwise invariant keeps holding.
    for (const auto& e : scene.mount_component(present_targets)) {
      if (!targeted.count(e) && scene.has_object(e)) {
        next.mounts.push_back({held.id, e, MountKind::Stacked});
      }
    }
  }

  std::string phrase = request.phrase;
  if (phrase.empty()) {
    phrase = "at (" + fmt2(request.position.x()) + ", " +
             fmt2(request.position.y()) + ", " + fmt2(request.position.z()) + ")";
  }
  return {std::move(next), "You have placed " + held.id + " " + phrase, true};
}

WorldResult release_free_space(const Scene& scene, const WorldParams& params) {
  if (!scene.held) {
    return {scene, "You are not holding any object", false};
  }
  const HeldObject held = *scene.held;
  const double pitch = held.diameter;
  const double r_h = held.diameter / 2.0;
  const TableBounds& tb = scene.table_bounds;

  const long cols = static_cast<long>(std::floor(tb.width() / pitch));
  const long rows = static_cast<long>(std::floor(tb.height() / pitch));
  for (long j = 0; j < rows; ++j) {
    for (long i = 0; i < cols; ++i) {
      Vec2 p(tb.min.x() + (i + 0.5) * pitch, tb.min.y() + (j + 0.5) * pitch);
      bool clear = true;
      for (const auto& o : scene.objects) {
        double dist =
            (p - Vec2(o.pose.translation.x(), o.pose.translation.y())).norm();
        if (dist < r_h + o.radius() + params.free_space_margin) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;

      Scene next = scene;
      SceneObject placed;
      placed.id = held.id;
      placed.pose.translation = Vec3(p.x(), p.y(), params.resting_z(r_h));
      placed.diameter = held.diameter;
      next.objects.push_back(std::move(placed));
      next.held.reset();
      return {std::move(next), "You have released " + held.id + " in free space",
              true};
    }
  }
  return {scene,
          "Cannot release " + held.id +
              ": no free space available on the tabletop",
          false};
}

}  // namespace tabletop
