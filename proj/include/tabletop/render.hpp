#pragma once

#include <tabletop/scene.hpp>

#include <string>

namespace tabletop {

// Deterministic top-down SVG: table rectangle, one labeled circle per placed
// object in scene order, and an inset for the held object when present.
// Same scene, same bytes.
std::string render_scene_svg(const Scene& scene);

}  // namespace tabletop
