#pragma once

#include <tabletop/scene.hpp>

#include <string>
#include <vector>

namespace tabletop {

// Every tabletop operation returns the next scene plus the observation text
// the agent will read. Failures are ordinary observations (ok=false), never
// exceptions: the agent is supposed to read them and recover.
struct WorldResult {
  Scene scene;
  std::string observation;
  bool ok = true;
};

// Renders placed object ids in document order, e.g. "['029_plate', '011_banana']".
std::string object_list(const Scene& scene);

WorldResult pick(const Scene& scene, const std::string& id);

struct PlacementRequest {
  Vec3 position = Vec3::Zero();
  SpatialSpecifier relation = SpatialSpecifier::NextTo;
  std::vector<std::string> targets;  // resolved ids; may be empty for raw drops
  std::string phrase;                // how the placement reads back, e.g.
                                     // "to the left of the 029_plate"
};

// Places the held object at the requested position. Mounting relations
// (on_top / inside) are exempt from collisions against their targets and the
// targets' existing mount stack, and get a mount record; everything else must
// keep horizontal sphere clearance beyond params.overlap_tolerance.
WorldResult place_at(const Scene& scene, const PlacementRequest& request,
                     const WorldParams& params = {});

// Scans a grid (pitch = held diameter, row-major from the min corner) for the
// first cell with free_space_margin clearance to every placed object.
WorldResult release_free_space(const Scene& scene, const WorldParams& params = {});

}  // namespace tabletop
