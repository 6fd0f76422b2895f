#pragma once

#include <tabletop/agent.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tabletop {

enum class ScenarioCategory { Simple, HighLevel, Infeasible };
std::string to_string(ScenarioCategory c);

struct GoalPredicate {
  enum class Kind { Relation, HeldEmpty, Absent };
  Kind kind = Kind::Relation;
  SpatialSpecifier specifier = SpatialSpecifier::NextTo;  // Relation only
  std::string object;
  std::string target;  // id or category noun; Relation only

  std::string describe() const;
};

struct Scenario {
  std::string id;
  ScenarioCategory category = ScenarioCategory::Simple;
  std::string command;
  std::string scene_path;    // absolute after loading
  std::string fixture_path;  // absolute after loading
  std::vector<GoalPredicate> goal;
  std::string infeasible_reason;  // "absent_object" | "unsatisfiable_goal"
  std::string notes;
};

// Throws std::runtime_error on malformed scenario files; infeasible scenarios
// must carry evidence (an absent-object predicate or an unsatisfiable_goal
// reason).
Scenario load_scenario_file(const std::string& path);
// All *.json files in the directory, sorted by filename.
std::vector<Scenario> load_scenario_dir(const std::string& dir);

struct GoalCheckDetail {
  std::string predicate;
  bool pass = false;
  std::string detail;  // why it failed, empty on pass
};

struct GoalCheck {
  bool pass = true;
  std::vector<GoalCheckDetail> details;
};

// Evaluates predicates against a scene. Directional relations require the
// offset from the target centroid to point along the specifier's axis and to
// clear the combined radii (minus tolerance); on_top / inside consult the
// scene's mount records; next_to / near accept a bounded clearance gap.
// Throws std::runtime_error when a non-absence predicate references an id or
// category the scene cannot resolve.
GoalCheck check_goal(const Scene& scene, const std::vector<GoalPredicate>& goal,
                     const AxisConvention& convention,
                     const CategoryMap& categories, double tolerance = 0.005);

struct EpisodeRecord {
  std::string scenario_id;
  ScenarioCategory category = ScenarioCategory::Simple;
  Outcome outcome = Outcome::Unset;
  int reported_steps = 0;
  bool success = false;
  std::string detail;  // goal-check or error detail on failure
};

struct CategoryRow {
  int count = 0;
  int successes = 0;
  double success_rate = 0.0;   // percent
  double avg_steps_exact = 0.0;
  long avg_steps_display = 0;  // rounded for the table
};

struct SuiteReport {
  CategoryRow simple, high_level, infeasible, overall;
  std::vector<EpisodeRecord> episodes;
  std::vector<std::string> infeasibility_lexicon;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

struct SuiteConfig {
  EpisodeConfig episode;
  std::string out_dir;  // per-episode artifacts land here when non-empty
  int parallel = 1;
};

// Runs every scenario against its replay fixture; success = goal satisfied
// for feasible scenarios, outcome Infeasible for infeasible ones. Episode
// errors (missing files, exhausted fixtures) mark that episode failed and the
// suite carries on. Throws std::invalid_argument on an empty scenario list.
SuiteReport run_suite(const std::vector<Scenario>& scenarios,
                      const SuiteConfig& config);

// ---- spatial understanding ----

struct SpatialEntry {
  std::string id;
  std::string scene_path;  // absolute after loading
  std::string target;      // id or category noun
  double held_diameter = 0.05;
};

std::vector<SpatialEntry> load_spatial_entries(const std::string& path);

struct SpatialConfig {
  int trials = 1;
  double sigma = 0.0;  // uniform per-axis pose noise on target objects
  std::uint64_t seed = 0;
  std::vector<SpatialSpecifier> specifiers{kAllSpecifiers.begin(),
                                           kAllSpecifiers.end()};
  AxisConvention convention;
  PlacerParams placer;
  CategoryMap categories;
  PlacementMode mode = PlacementMode::Geometric;
  ChatBackend* backend = nullptr;        // llm modes only
  PromptTemplate placer_prompt;          // llm modes only
};

struct SpatialRow {
  SpatialSpecifier specifier = SpatialSpecifier::OnTop;
  OffsetRow offsets;
  int errors = 0;
};

struct SpatialReport {
  std::vector<SpatialRow> rows;  // one per requested specifier, table order

  std::string to_text() const;
  nlohmann::json to_json() const;
};

// For each entry x specifier x trial: jitter the target objects, resolve the
// placement, record the offset sample. Resolver errors count per row; the
// noise draw order is fixed so results are reproducible from the seed.
SpatialReport run_spatial_eval(const std::vector<SpatialEntry>& entries,
                               const SpatialConfig& config);

// ---- ratings ----

struct RatingSet {
  std::string label;
  std::vector<int> ratings;  // each within [1, 10]
};

struct RatingSummary {
  std::string label;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  int count = 0;

  std::string mean_str() const;    // two decimals
  std::string stddev_str() const;  // two decimals
};

/// Throws std::invalid_argument on an empty set, an out-of-range rating, or a
// set with fewer than two ratings (sample stddev undefined).
std::vector<RatingSummary> aggregate_ratings(const std::vector<RatingSet>& sets);
std::string ratings_to_text(const std::vector<RatingSummary>& summaries);

}  // namespace tabletop
