#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tabletop/harness.hpp"
#include "tabletop/render.hpp"

using namespace tabletop;

namespace {

const std::string kAssetDir = TABLETOP_ASSET_DIR;

std::vector<Scenario> shipped_scenarios() {
  return load_scenario_dir(kAssetDir + "/scenarios");
}

SuiteConfig suite_config() {
  SuiteConfig config;
  config.episode = load_episode_config(kAssetDir);
  return config;
}

Scene goal_scene(double banana_x, double banana_y) {
  Scene scene = load_scene(R"({
    "table_bounds": {"min": [-1.0, -1.0], "max": [1.0, 1.0]},
    "objects": [
      {"id": "029_plate", "translation": [0, 0, -0.1], "quaternion": [0,0,0,1], "diameter": 0.2}
    ]
  })");
  SceneObject banana;
  banana.id = "011_banana";
  banana.pose.translation = Vec3(banana_x, banana_y, -0.05);
  banana.diameter = 0.1;
  scene.objects.push_back(banana);
  return scene;
}

GoalPredicate relation(SpatialSpecifier spec, const std::string& object,
                       const std::string& target) {
  GoalPredicate p;
  p.kind = GoalPredicate::Kind::Relation;
  p.specifier = spec;
  p.object = object;
  p.target = target;
  return p;
}

}  // namespace

TEST_CASE("the shipped scenario set has the expected composition") {
  auto scenarios = shipped_scenarios();
  REQUIRE(scenarios.size() == 24);
  int simple = 0, high = 0, infeasible = 0;
  for (const auto& s : scenarios) {
    switch (s.category) {
      case ScenarioCategory::Simple: ++simple; break;
      case ScenarioCategory::HighLevel: ++high; break;
      case ScenarioCategory::Infeasible: ++infeasible; break;
    }
    CHECK_FALSE(s.command.empty());
    CHECK(std::filesystem::exists(s.scene_path));
    CHECK(std::filesystem::exists(s.fixture_path));
  }
  CHECK(simple == 16);
  CHECK(high == 5);
  CHECK(infeasible == 3);
}

TEST_CASE("scenario validation demands evidence for infeasibility") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tabletop_bad_scenario";
  fs::create_directories(dir);
  fs::path file = dir / "bad.json";
  {
    FILE* f = fopen(file.c_str(), "w");
    fputs(R"({"id": "bad", "category": "infeasible", "command": "x",
              "scene": "s.json", "fixture": "f.json", "goal": []})",
          f);
    fclose(f);
  }
  CHECK_THROWS_AS(load_scenario_file(file.string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("check_goal accepts the geometric left placement") {
  EpisodeConfig config = load_episode_config(kAssetDir);
  // r_t + r_h + margin = 0.17 along +X.
  Scene scene = goal_scene(0.17, 0.0);
  auto check = check_goal(scene, {relation(SpatialSpecifier::Left, "011_banana",
                                           "029_plate")},
                          config.convention, config.categories);
  CHECK(check.pass);
}

TEST_CASE("check_goal rejects a sign flip") {
  EpisodeConfig config = load_episode_config(kAssetDir);
  Scene scene = goal_scene(-0.17, 0.0);  // on the Right side instead
  auto check = check_goal(scene, {relation(SpatialSpecifier::Left, "011_banana",
                                           "029_plate")},
                          config.convention, config.categories);
  CHECK_FALSE(check.pass);
  REQUIRE(check.details.size() == 1);
  CHECK_FALSE(check.details[0].detail.empty());
  CHECK(check.details[0].detail.find("left") != std::string::npos);
}

TEST_CASE("check_goal distinguishes inside from on-top") {
  EpisodeConfig config = load_episode_config(kAssetDir);
  Scene scene = load_scene(R"({
    "table_bounds": {"min": [-1.0, -1.0], "max": [1.0, 1.0]},
    "objects": [
      {"id": "024_bowl", "translation": [0, 0, -0.08], "quaternion": [0,0,0,1], "diameter": 0.16}
    ]
  })");
  scene.held = HeldObject{"017_orange", 0.07};
  PlacementRequest req;
  req.position = Vec3(0.0, 0.0, -0.045);
  req.relation = SpatialSpecifier::Inside;
  req.targets = {"024_bowl"};
  req.phrase = "inside the 024_bowl";
  Scene after = place_at(scene, req).scene;

  auto inside_check =
      check_goal(after, {relation(SpatialSpecifier::Inside, "017_orange",
                                  "024_bowl")},
                 config.convention, config.categories);
  CHECK(inside_check.pass);

  auto ontop_check = check_goal(after, {relation(SpatialSpecifier::OnTop,
                                                 "017_orange", "024_bowl")},
                                config.convention, config.categories);
  CHECK_FALSE(ontop_check.pass);
  CHECK(ontop_check.details[0].detail.find("contained") != std::string::npos);
}

TEST_CASE("check_goal handles held and absent objects") {
  EpisodeConfig config = load_episode_config(kAssetDir);
  Scene scene = goal_scene(0.17, 0.0);

  GoalPredicate held_empty;
  held_empty.kind = GoalPredicate::Kind::HeldEmpty;
  CHECK(check_goal(scene, {held_empty}, config.convention, config.categories)
            .pass);

  GoalPredicate absent;
  absent.kind = GoalPredicate::Kind::Absent;
  absent.object = "006_mustard_bottle";
  CHECK(check_goal(scene, {absent}, config.convention, config.categories).pass);

  absent.object = "011_banana";  // present → absence fails
  CHECK_FALSE(
      check_goal(scene, {absent}, config.convention, config.categories).pass);

  // Unknown object in a relation predicate is an error, not a quiet fail.
  CHECK_THROWS_AS(
      check_goal(scene, {relation(SpatialSpecifier::Left, "ghost", "029_plate")},
                 config.convention, config.categories),
      std::runtime_error);
}

TEST_CASE("the shipped suite matches the published-shape step averages") {
  auto report = run_suite(shipped_scenarios(), suite_config());

  CHECK(report.simple.count == 16);
  CHECK(report.high_level.count == 5);
  CHECK(report.infeasible.count == 3);
  CHECK(report.overall.count == 24);

  // Fixtures are authored to succeed everywhere.
  CHECK(report.simple.successes == 16);
  CHECK(report.high_level.successes == 5);
  CHECK(report.infeasible.successes == 3);
  CHECK(report.overall.success_rate == doctest::Approx(100.0));

  CHECK(report.simple.avg_steps_exact == doctest::Approx(4.0));
  CHECK(report.high_level.avg_steps_exact == doctest::Approx(6.0));
  CHECK(report.infeasible.avg_steps_exact == doctest::Approx(5.0));
  CHECK(report.simple.avg_steps_display == 4);
  CHECK(report.high_level.avg_steps_display == 6);
  CHECK(report.infeasible.avg_steps_display == 5);
  CHECK(report.overall.avg_steps_display == 5);

  for (const auto& e : report.episodes) {
    CAPTURE(e.scenario_id);
    CAPTURE(e.detail);
    CHECK(e.success);
    if (e.category == ScenarioCategory::Infeasible) {
      CHECK(e.outcome == Outcome::Infeasible);
    } else {
      CHECK(e.outcome == Outcome::Success);
    }
  }

  // Overall aggregates cross-check against the flat episode list.
  int successes = 0;
  double steps = 0.0;
  for (const auto& e : report.episodes) {
    successes += e.success ? 1 : 0;
    steps += e.reported_steps;
  }
  CHECK(report.overall.successes == successes);
  CHECK(report.overall.avg_steps_exact ==
        doctest::Approx(steps / report.episodes.size()));

  // The text table carries the rows and the conventions.
  std::string text = report.to_text();
  CHECK(text.find("simple") != std::string::npos);
  CHECK(text.find("high_level") != std::string::npos);
  CHECK(text.find("infeasible") != std::string::npos);
  CHECK(text.find("overall") != std::string::npos);
  CHECK(text.find("impossible") != std::string::npos);  // lexicon listed
}

TEST_CASE("suite runs are reproducible and parallel-stable") {
  auto scenarios = shipped_scenarios();
  auto a = run_suite(scenarios, suite_config());
  auto b = run_suite(scenarios, suite_config());
  CHECK(a.to_text() == b.to_text());
  CHECK(a.to_json() == b.to_json());

  SuiteConfig par = suite_config();
  par.parallel = 4;
  auto c = run_suite(scenarios, par);
  CHECK(c.to_text() == a.to_text());
}

TEST_CASE("run_suite rejects an empty scenario list") {
  CHECK_THROWS_AS(run_suite({}, suite_config()), std::invalid_argument);
}

TEST_CASE("suite artifacts land in the output directory") {
  namespace fs = std::filesystem;
  fs::path out = fs::temp_directory_path() / "tabletop_suite_artifacts";
  fs::remove_all(out);

  SuiteConfig config = suite_config();
  config.out_dir = out.string();
  auto scenarios = shipped_scenarios();
  run_suite({scenarios[0]}, config);

  fs::path episode_dir = out / scenarios[0].id;
  CHECK(fs::exists(episode_dir / "transcript.txt"));
  CHECK(fs::exists(episode_dir / "transcript.json"));
  CHECK(fs::exists(episode_dir / "final_scene.json"));
  CHECK(fs::exists(episode_dir / "scene.svg"));
  CHECK(fs::exists(episode_dir / "run_meta.json"));
  fs::remove_all(out);
}

TEST_CASE("spatial eval is exact at zero noise and spreads under noise") {
  auto entries = load_spatial_entries(kAssetDir + "/spatial/entries.json");
  REQUIRE(entries.size() == 16);

  EpisodeConfig episode = load_episode_config(kAssetDir);
  SpatialConfig config;
  config.convention = episode.convention;
  config.categories = episode.categories;

  SUBCASE("zero noise → zero variance, no errors") {
    auto report = run_spatial_eval(entries, config);
    REQUIRE(report.rows.size() == kAllSpecifiers.size());
    for (const auto& row : report.rows) {
      CAPTURE(to_key(row.specifier));
      CHECK(row.errors == 0);
      CHECK(row.offsets.avg_variance == doctest::Approx(0.0));
      CHECK(row.offsets.samples == 16);
    }
  }
  SUBCASE("sign pattern of the directional rows") {
    auto report = run_spatial_eval(entries, config);
    for (const auto& row : report.rows) {
      if (row.specifier == SpatialSpecifier::Left) {
        CHECK(row.offsets.mean_delta.x() > 0.0);
      }
      if (row.specifier == SpatialSpecifier::Right) {
        CHECK(row.offsets.mean_delta.x() < 0.0);
      }
      if (row.specifier == SpatialSpecifier::OnTop) {
        CHECK(std::abs(row.offsets.mean_delta.x()) < 1e-9);
        CHECK(std::abs(row.offsets.mean_delta.y()) < 1e-9);
      }
    }
  }
  SUBCASE("noise raises variance monotonically") {
    config.trials = 50;
    config.seed = 9;

    config.sigma = 0.0;
    auto zero = run_spatial_eval(entries, config);
    config.sigma = 0.005;
    auto low = run_spatial_eval(entries, config);
    config.sigma = 0.02;
    auto high = run_spatial_eval(entries, config);

    for (std::size_t i = 0; i < zero.rows.size(); ++i) {
      CAPTURE(to_key(zero.rows[i].specifier));
      CHECK(zero.rows[i].offsets.avg_variance == doctest::Approx(0.0));
      CHECK(low.rows[i].offsets.avg_variance > 0.0);
      CHECK(high.rows[i].offsets.avg_variance >=
            low.rows[i].offsets.avg_variance);
    }
  }
  SUBCASE("same seed, same report bytes") {
    config.trials = 10;
    config.sigma = 0.01;
    config.seed = 123;
    auto a = run_spatial_eval(entries, config);
    auto b = run_spatial_eval(entries, config);
    CHECK(a.to_text() == b.to_text());
  }
}

TEST_CASE("ratings aggregation matches hand-computed rows") {
  auto rows = aggregate_ratings({{"all tens", {10, 10, 10}},
                                 {"one dissent", {9, 10, 10}}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean_str() == "10.00");
  CHECK(rows[0].stddev_str() == "0.00");
  CHECK(rows[1].mean_str() == "9.67");
  CHECK(rows[1].stddev_str() == "0.58");
  CHECK(rows[1].count == 3);

  std::string text = ratings_to_text(rows);
  CHECK(text.find("9.67") != std::string::npos);
  CHECK(text.find("0.58") != std::string::npos);

  CHECK_THROWS_AS(aggregate_ratings({{"too few", {10}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(aggregate_ratings({{"range", {0, 5}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(aggregate_ratings({{"range", {5, 11}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(aggregate_ratings({}), std::invalid_argument);
}

TEST_CASE("scene rendering is deterministic and complete") {
  Scene empty = load_scene(
      R"({"table_bounds": {"min": [-0.5, -0.5], "max": [0.5, 0.5]}, "objects": []})");
  std::string svg = render_scene_svg(empty);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
  CHECK(svg.find("<circle") == std::string::npos);

  Scene two = load_scene_file(kAssetDir + "/scenes/banana_plate.json");
  std::string first = render_scene_svg(two);
  std::string second = render_scene_svg(two);
  CHECK(first == second);
  CHECK(first.find("029_plate") != std::string::npos);
  CHECK(first.find("011_banana") != std::string::npos);

  two.held = HeldObject{"013_apple", 0.075};
  std::string with_held = render_scene_svg(two);
  CHECK(with_held.find("013_apple") != std::string::npos);
}
