#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>

#include "tabletop/scene.hpp"
#include "tabletop/world.hpp"

using namespace tabletop;

namespace {

std::string two_object_doc() {
  return R"({
    "table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]},
    "objects": [
      {"id": "029_plate", "translation": [0.15, 0.05, -0.1], "quaternion": [0, 0, 0, 1], "diameter": 0.2},
      {"id": "011_banana", "translation": [-0.25, -0.1, -0.05], "quaternion": [0, 0, 0, 1], "diameter": 0.1}
    ]
  })";
}

Scene two_object_scene() { return load_scene(two_object_doc()); }

}  // namespace

TEST_CASE("load_scene keeps document order and ids") {
  Scene scene = two_object_scene();
  REQUIRE(scene.objects.size() == 2);
  CHECK(scene.objects[0].id == "029_plate");
  CHECK(scene.objects[1].id == "011_banana");
  CHECK(scene.objects[0].diameter == doctest::Approx(0.2));
  CHECK(object_list(scene) == "['029_plate', '011_banana']");
}

TEST_CASE("load_scene empty object list") {
  Scene scene = load_scene(
      R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]}, "objects": []})");
  CHECK(scene.objects.empty());
  CHECK(object_list(scene) == "[]");
}

TEST_CASE("load_scene rejects bad documents with field-level messages") {
  CHECK_THROWS_WITH_AS(
      load_scene(
          R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]},
              "objects": [{"id": "a", "translation": [0,0,0], "quaternion": [0,0,0,1], "diameter": 0}]})"),
      doctest::Contains("diameter"), SceneError);
  CHECK_THROWS_WITH_AS(
      load_scene(
          R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]},
              "objects": [
                {"id": "a", "translation": [0,0,0], "quaternion": [0,0,0,1], "diameter": 0.1},
                {"id": "a", "translation": [0.3,0,0], "quaternion": [0,0,0,1], "diameter": 0.1}]})"),
      doctest::Contains("duplicate"), SceneError);
  CHECK_THROWS_WITH_AS(
      load_scene(
          R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]},
              "objects": [{"id": "a", "translation": [0,0,0], "quaternion": [0,0,0,2], "diameter": 0.1}]})"),
      doctest::Contains("quaternion"), SceneError);
  CHECK_THROWS_AS(load_scene("not json at all"), SceneError);
}

TEST_CASE("scene save/load round trip") {
  Scene scene = two_object_scene();
  Scene again = load_scene(save_scene(scene));
  CHECK(again == scene);
}

TEST_CASE("pick removes the object and reports it") {
  Scene scene = two_object_scene();
  auto r = pick(scene, "011_banana");
  CHECK(r.ok);
  CHECK(r.observation == "You have picked up 011_banana");
  REQUIRE(r.scene.held.has_value());
  CHECK(r.scene.held->id == "011_banana");
  CHECK(object_list(r.scene) == "['029_plate']");
  // Input scene untouched (value semantics).
  CHECK(scene.objects.size() == 2);
  CHECK_FALSE(scene.held.has_value());
}

TEST_CASE("pick failure modes come back as observations") {
  Scene scene = two_object_scene();
  auto first = pick(scene, "011_banana");
  auto second = pick(first.scene, "029_plate");
  CHECK_FALSE(second.ok);
  CHECK(second.observation ==
        "Cannot pick 029_plate: you are already holding 011_banana");

  auto ghost = pick(scene, "999_ghost");
  CHECK_FALSE(ghost.ok);
  CHECK(ghost.observation == "Cannot pick 999_ghost: it is not in the scene");
}

TEST_CASE("place_at happy path echoes the location phrase") {
  Scene scene = two_object_scene();
  auto held = pick(scene, "011_banana");
  PlacementRequest req;
  req.position = Vec3(0.32, 0.05, -0.05);
  req.relation = SpatialSpecifier::Left;
  req.targets = {"029_plate"};
  req.phrase = "to the left of the 029_plate";
  auto placed = place_at(held.scene, req);
  CHECK(placed.ok);
  CHECK(placed.observation ==
        "You have placed 011_banana to the left of the 029_plate");
  CHECK(object_list(placed.scene) ==
        "['029_plate', '011_banana']");
  REQUIRE(placed.scene.find("011_banana") != nullptr);
  CHECK(placed.scene.find("011_banana")->pose.translation.x() ==
        doctest::Approx(0.32));
  // Identity orientation on placement.
  CHECK(placed.scene.find("011_banana")->pose.orientation.w() ==
        doctest::Approx(1.0));
}

TEST_CASE("place_at failure modes") {
  Scene scene = two_object_scene();

  PlacementRequest req;
  req.position = Vec3(0.0, 0.0, -0.05);
  SUBCASE("nothing held") {
    auto r = place_at(scene, req);
    CHECK_FALSE(r.ok);
    CHECK(r.observation == "You are not holding any object");
  }

  auto held = pick(scene, "011_banana");
  SUBCASE("out of bounds") {
    req.position = Vec3(0.9, 0.0, -0.05);
    auto r = place_at(held.scene, req);
    CHECK_FALSE(r.ok);
    CHECK(r.observation ==
          "Cannot place 011_banana: the position (0.90, 0.00) is outside the "
          "table bounds");
  }
  SUBCASE("collision names the nearest offender") {
    req.position = Vec3(0.18, 0.05, -0.05);  // overlaps the plate
    auto r = place_at(held.scene, req);
    CHECK_FALSE(r.ok);
    CHECK(r.observation ==
          "Cannot place 011_banana: it would collide with 029_plate");
  }
  SUBCASE("on-top of the target is exempt from the collision test") {
    req.position = Vec3(0.15, 0.05, -0.25);
    req.relation = SpatialSpecifier::OnTop;
    req.targets = {"029_plate"};
    req.phrase = "on top of the 029_plate";
    auto r = place_at(held.scene, req);
    CHECK(r.ok);
    CHECK(r.scene.mount_kind("011_banana", "029_plate").has_value());
    CHECK(*r.scene.mount_kind("011_banana", "029_plate") ==
          MountKind::Stacked);
    CHECK_NOTHROW(r.scene.validate());
  }
}

TEST_CASE("release scans the grid row-major from the minimum corner") {
  Scene scene = load_scene(
      R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]}, "objects": []})");
  scene.held = HeldObject{"011_banana", 0.1};
  auto r = release_free_space(scene);
  CHECK(r.ok);
  CHECK(r.observation == "You have released 011_banana in free space");
  REQUIRE(r.scene.find("011_banana") != nullptr);
  // First cell center: min corner + half pitch per axis.
  CHECK(r.scene.find("011_banana")->pose.translation.x() ==
        doctest::Approx(-0.45));
  CHECK(r.scene.find("011_banana")->pose.translation.y() ==
        doctest::Approx(-0.45));
}

TEST_CASE("release failure modes") {
  Scene empty = load_scene(
      R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]}, "objects": []})");
  auto nothing = release_free_space(empty);
  CHECK_FALSE(nothing.ok);
  CHECK(nothing.observation == "You are not holding any object");

  // One object occupying the single candidate cell of a coarse grid.
  Scene crowded = load_scene(
      R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]},
          "objects": [{"id": "big", "translation": [-0.2, -0.2, -0.3], "quaternion": [0,0,0,1], "diameter": 0.6}]})");
  crowded.held = HeldObject{"other_big", 0.6};
  auto r = release_free_space(crowded);
  CHECK_FALSE(r.ok);
  CHECK(r.observation ==
        "Cannot release other_big: no free space available on the tabletop");
}

TEST_CASE("pick then release keeps every other pose bit-exact") {
  Scene scene = two_object_scene();
  auto picked = pick(scene, "011_banana");
  auto released = release_free_space(picked.scene);
  REQUIRE(released.ok);
  CHECK(released.scene.objects.size() == scene.objects.size());
  const SceneObject* plate_before = scene.find("029_plate");
  const SceneObject* plate_after = released.scene.find("029_plate");
  REQUIRE(plate_after != nullptr);
  CHECK(plate_after->pose.translation == plate_before->pose.translation);
  CHECK(plate_after->pose.orientation.coeffs() ==
        plate_before->pose.orientation.coeffs());
}

TEST_CASE("release position is a pure function of the scene") {
  Scene scene = two_object_scene();
  auto picked = pick(scene, "011_banana");
  auto a = release_free_space(picked.scene);
  auto b = release_free_space(picked.scene);
  REQUIRE(a.ok);
  REQUIRE(b.ok);
  CHECK(a.scene == b.scene);
}

TEST_CASE("random tool sequences never violate scene invariants") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> ids = {"029_plate", "011_banana"};
  for (int round = 0; round < 200; ++round) {
    Scene scene = two_object_scene();
    for (int op = 0; op < 12; ++op) {
      switch (rng() % 4) {
        case 0:
          object_list(scene);
          break;
        case 1:
          scene = pick(scene, ids[rng() % ids.size()]).scene;
          break;
        case 2: {
          PlacementRequest req;
          std::uniform_real_distribution<double> coord(-0.49, 0.49);
          req.position = Vec3(coord(rng), coord(rng), -0.05);
          req.phrase = "somewhere";
          scene = place_at(scene, req).scene;
          break;
        }
        case 3:
          scene = release_free_space(scene).scene;
          break;
      }
      CHECK_NOTHROW(scene.validate());
    }
  }
}
