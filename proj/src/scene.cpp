#include <tabletop/scene.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace tabletop {

namespace {

using nlohmann::json;

constexpr double kQuatNormTolerance = 1e-6;

double number_field(const json& j, const std::string& context,
                    const std::string& key) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw SceneError(context + ": missing or non-numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

std::vector<double> number_array(const json& j, const std::string& context,
                                 const std::string& key, std::size_t n) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != n) {
    throw SceneError(context + ": field '" + key + "' must be an array of " +
                     std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) {
      throw SceneError(context + ": field '" + key +
                       "' must contain only numbers");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

double horizontal_distance(const Vec3& a, const Vec3& b) {
  return (Vec2(a.x(), a.y()) - Vec2(b.x(), b.y())).norm();
}

}  // namespace

void TableBounds::validate() const {
  if (!(min.x() < max.x()) || !(min.y() < max.y())) {
    throw SceneError("table_bounds: min must be strictly below max on both axes");
  }
  if (!min.allFinite() || !max.allFinite()) {
    throw SceneError("table_bounds: bounds must be finite");
  }
}

const SceneObject* Scene::find(const std::string& id) const {
  for (const auto& o : objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

std::optional<MountKind> Scene::mount_kind(const std::string& object,
                                           const std::string& base) const {
  for (const auto& m : mounts) {
    if (m.object == object && m.base == base) return m.kind;
  }
  return std::nullopt;
}

std::vector<std::string> Scene::mount_component(
    const std::vector<std::string>& seeds) const {
  std::set<std::string> visited(seeds.begin(), seeds.end());
  std::vector<std::string> frontier(seeds.begin(), seeds.end());
  std::vector<std::string> found;
  while (!frontier.empty()) {
    std::string cur = frontier.back();
    frontier.pop_back();
    for (const auto& m : mounts) {
      for (const std::string* next : {&m.object, &m.base}) {
        const std::string& other = (next == &m.object) ? m.base : m.object;
        if (*next == cur && visited.insert(other).second) {
          found.push_back(other);
          frontier.push_back(other);
        }
      }
    }
  }
  return found;
}

void Scene::validate(const WorldParams& params) const {
  table_bounds.validate();

  std::set<std::string> seen;
  for (const auto& o : objects) {
    if (o.id.empty()) throw SceneError("object with empty id");
    if (!seen.insert(o.id).second) {
      throw SceneError("duplicate object id '" + o.id + "'");
    }
    if (held && held->id == o.id) {
      throw SceneError("object '" + o.id + "' is both placed and held");
    }
    if (!(o.diameter > 0.0) || !std::isfinite(o.diameter)) {
      throw SceneError("object '" + o.id + "' has non-positive diameter");
    }
    if (!o.pose.translation.allFinite()) {
      throw SceneError("object '" + o.id + "' has a non-finite translation");
    }
    if (!o.pose.orientation.coeffs().allFinite() ||
        std::abs(o.pose.orientation.norm() - 1.0) > kQuatNormTolerance) {
      throw SceneError("object '" + o.id + "' has a non-unit quaternion");
    }
    if (!table_bounds.contains(
            Vec2(o.pose.translation.x(), o.pose.translation.y()))) {
      throw SceneError("object '" + o.id + "' lies outside the table bounds");
    }
  }
  if (held) {
    if (held->id.empty()) throw SceneError("held object with empty id");
    if (!(held->diameter > 0.0) || !std::isfinite(held->diameter)) {
      throw SceneError("held object '" + held->id +
                       "' has non-positive diameter");
    }
  }
  for (const auto& m : mounts) {
    if (m.object == m.base) {
      throw SceneError("mount record for '" + m.object + "' on itself");
    }
  }

  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      const auto& a = objects[i];
      const auto& b = objects[j];
      if (mount_kind(a.id, b.id) || mount_kind(b.id, a.id)) continue;
      // Mounted chains overlap transitively (mug on bowl on plate: mug and
      // plate share a footprint with no direct record), so exempt any pair
      // connected through the mount graph.
      auto component = mount_component({a.id});
      if (std::find(component.begin(), component.end(), b.id) !=
          component.end()) {
        continue;
      }
      double min_dist = a.radius() + b.radius() - params.overlap_tolerance;
      if (horizontal_distance(a.pose.translation, b.pose.translation) <
          min_dist) {
        throw SceneError("objects '" + a.id + "' and '" + b.id +
                         "' overlap beyond the allowed tolerance");
      }
    }
  }
}

Scene load_scene(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SceneError(std::string("scene is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SceneError("scene document must be a JSON object");
  if (!doc.contains("table_bounds") || !doc["table_bounds"].is_object()) {
    throw SceneError("scene: missing 'table_bounds' object");
  }
  if (!doc.contains("objects") || !doc["objects"].is_array()) {
    throw SceneError("scene: missing 'objects' array");
  }

  Scene scene;
  const auto& tb = doc["table_bounds"];
  auto bmin = number_array(tb, "table_bounds", "min", 2);
  auto bmax = number_array(tb, "table_bounds", "max", 2);
  scene.table_bounds.min = Vec2(bmin[0], bmin[1]);
  scene.table_bounds.max = Vec2(bmax[0], bmax[1]);

  for (const auto& jo : doc["objects"]) {
    if (!jo.is_object()) throw SceneError("scene: object entries must be objects");
    if (!jo.contains("id") || !jo["id"].is_string()) {
      throw SceneError("scene: object missing string field 'id'");
    }
    SceneObject o;
    o.id = jo["id"].get<std::string>();
    const std::string ctx = "object '" + o.id + "'";
    auto t = number_array(jo, ctx, "translation", 3);
    o.pose.translation = Vec3(t[0], t[1], t[2]);
    auto q = number_array(jo, ctx, "quaternion", 4);  // [x, y, z, w]
    o.pose.orientation = Quat(q[3], q[0], q[1], q[2]);
    o.diameter = number_field(jo, ctx, "diameter");
    scene.objects.push_back(std::move(o));
  }

  if (doc.contains("held")) {
    const auto& jh = doc["held"];
    if (!jh.is_object() || !jh.contains("id") || !jh["id"].is_string()) {
      throw SceneError("scene: 'held' must be an object with a string 'id'");
    }
    HeldObject h;
    h.id = jh["id"].get<std::string>();
    h.diameter = number_field(jh, "held object", "diameter");
    scene.held = h;
  }

  if (doc.contains("mounts")) {
    if (!doc["mounts"].is_array()) {
      throw SceneError("scene: 'mounts' must be an array");
    }
    for (const auto& jm : doc["mounts"]) {
      if (!jm.is_object() || !jm.contains("object") || !jm.contains("base") ||
          !jm["object"].is_string() || !jm["base"].is_string()) {
        throw SceneError("scene: mount entries need string 'object' and 'base'");
      }
      MountRecord m;
      m.object = jm["object"].get<std::string>();
      m.base = jm["base"].get<std::string>();
      std::string kind = jm.value("kind", "stacked");
      if (kind == "stacked") {
        m.kind = MountKind::Stacked;
      } else if (kind == "contained") {
        m.kind = MountKind::Contained;
      } else {
        throw SceneError("scene: mount kind must be 'stacked' or 'contained'");
      }
      scene.mounts.push_back(std::move(m));
    }
  } else {
    // Documents may describe pre-stacked arrangements without spelling out
    // the records; infer one per overlapping pair so validation accepts the
    // layout. A center lying inside the other sphere reads as containment.
    WorldParams defaults;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      for (std::size_t j = i + 1; j < scene.objects.size(); ++j) {
        const auto& a = scene.objects[i];
        const auto& b = scene.objects[j];
        double dist = horizontal_distance(a.pose.translation, b.pose.translation);
        if (dist >= a.radius() + b.radius() - defaults.overlap_tolerance) continue;
        // The smaller sphere mounts on the larger one.
        const auto& top = a.radius() <= b.radius() ? a : b;
        const auto& base = a.radius() <= b.radius() ? b : a;
        double center_gap =
            (top.pose.translation - base.pose.translation).norm();
        MountRecord m;
        m.object = top.id;
        m.base = base.id;
        m.kind = center_gap < base.radius() ? MountKind::Contained
                                            : MountKind::Stacked;
        scene.mounts.push_back(std::move(m));
      }
    }
  }

  scene.validate();
  return scene;
}

Scene load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scene(buf.str());
}

std::string save_scene(const Scene& scene) {
  json doc;
  doc["table_bounds"] = {
      {"min", {scene.table_bounds.min.x(), scene.table_bounds.min.y()}},
      {"max", {scene.table_bounds.max.x(), scene.table_bounds.max.y()}},
  };
  json objects = json::array();
  for (const auto& o : scene.objects) {
    json jo;
    jo["id"] = o.id;
    jo["translation"] = {o.pose.translation.x(), o.pose.translation.y(),
                         o.pose.translation.z()};
    jo["quaternion"] = {o.pose.orientation.x(), o.pose.orientation.y(),
                        o.pose.orientation.z(), o.pose.orientation.w()};
    jo["diameter"] = o.diameter;
    objects.push_back(std::move(jo));
  }
  doc["objects"] = std::move(objects);
  if (scene.held) {
    doc["held"] = {{"id", scene.held->id}, {"diameter", scene.held->diameter}};
  }
  if (!scene.mounts.empty()) {
    json mounts = json::array();
    for (const auto& m : scene.mounts) {
      mounts.push_back({{"object", m.object},
                        {"base", m.base},
                        {"kind", m.kind == MountKind::Stacked ? "stacked"
                                                              : "contained"}});
    }
    doc["mounts"] = std::move(mounts);
  }
  return doc.dump(2) + "\n";
}

}  // namespace tabletop
