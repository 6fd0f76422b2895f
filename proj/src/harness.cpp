#include <tabletop/harness.hpp>
#include <tabletop/render.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace tabletop {

namespace fs = std::filesystem;

namespace {

using nlohmann::json;

// Accepted clearance gap between bounding spheres for proximity relations.
constexpr double kNextToMaxGap = 0.25;
constexpr double kNearMaxGap = 0.40;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(std::string("cannot open ") + what + ": " + path);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string(what) + " " + path +
                             " is not valid JSON: " + e.what());
  }
}

std::string resolve_relative(const std::string& base_file,
                             const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(base_file).parent_path() / p).lexically_normal().string();
}

Vec2 xy(const Vec3& v) { return Vec2(v.x(), v.y()); }

// Resolves a goal target (id or category) to member ids; empty if unknown.
std::vector<std::string> resolve_goal_ids(const Scene& scene,
                                          const CategoryMap& categories,
                                          const std::string& target) {
  if (scene.has_object(target)) return {target};
  if (categories.has_category(target)) return categories.members(scene, target);
  return {};
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path.string());
  }
  out << content;
}

}  // namespace

std::string to_string(ScenarioCategory c) {
  switch (c) {
    case ScenarioCategory::Simple: return "simple";
    case ScenarioCategory::HighLevel: return "high_level";
    case ScenarioCategory::Infeasible: return "infeasible";
  }
  throw std::invalid_argument("unknown scenario category");
}

std::string GoalPredicate::describe() const {
  switch (kind) {
    case Kind::Relation:
      return to_key(specifier) + "(" + object + ", " + target + ")";
    case Kind::HeldEmpty:
      return "held_empty()";
    case Kind::Absent:
      return "absent(" + object + ")";
  }
  return "?";
}

Scenario load_scenario_file(const std::string& path) {
  json doc = load_json_file(path, "scenario file");
  Scenario s;
  try {
    s.id = doc.at("id").get<std::string>();
    const std::string cat = doc.at("category").get<std::string>();
    if (cat == "simple") {
      s.category = ScenarioCategory::Simple;
    } else if (cat == "high_level") {
      s.category = ScenarioCategory::HighLevel;
    } else if (cat == "infeasible") {
      s.category = ScenarioCategory::Infeasible;
    } else {
      throw std::runtime_error("scenario " + path + ": unknown category '" +
                               cat + "'");
    }
    s.command = doc.at("command").get<std::string>();
    s.scene_path = resolve_relative(path, doc.at("scene").get<std::string>());
    s.fixture_path = resolve_relative(path, doc.at("fixture").get<std::string>());
    s.infeasible_reason = doc.value("infeasible_reason", "");
    s.notes = doc.value("notes", "");

    for (const auto& jp : doc.value("goal", json::array())) {
      GoalPredicate p;
      if (jp.contains("relation")) {
        p.kind = GoalPredicate::Kind::Relation;
        auto spec = specifier_from_key(jp.at("relation").get<std::string>());
        if (!spec) {
          throw std::runtime_error("scenario " + path +
                                   ": unknown relation key '" +
                                   jp.at("relation").get<std::string>() + "'");
        }
        p.specifier = *spec;
        p.object = jp.at("object").get<std::string>();
        p.target = jp.at("target").get<std::string>();
      } else if (jp.contains("held_empty")) {
        p.kind = GoalPredicate::Kind::HeldEmpty;
      } else if (jp.contains("absent")) {
        p.kind = GoalPredicate::Kind::Absent;
        p.object = jp.at("absent").get<std::string>();
      } else {
        throw std::runtime_error("scenario " + path +
                                 ": goal entry with no recognized predicate");
      }
      s.goal.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("scenario " + path + " is malformed: " + e.what());
  }

  if (s.command.empty()) {
    throw std::runtime_error("scenario " + path + " has an empty command");
  }
  if (s.category == ScenarioCategory::Infeasible) {
    bool has_absent = std::any_of(s.goal.begin(), s.goal.end(), [](const auto& p) {
      return p.kind == GoalPredicate::Kind::Absent;
    });
    if (!has_absent && s.infeasible_reason != "unsatisfiable_goal") {
      throw std::runtime_error(
          "scenario " + path +
          ": infeasible scenarios need an absent-object predicate or "
          "infeasible_reason \"unsatisfiable_goal\"");
    }
  } else if (s.goal.empty()) {
    throw std::runtime_error("scenario " + path +
                             ": feasible scenarios need goal predicates");
  }
  return s;
}

std::vector<Scenario> load_scenario_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("scenario directory does not exist: " + dir);
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(load_scenario_file(f));
  return out;
}

GoalCheck check_goal(const Scene& scene, const std::vector<GoalPredicate>& goal,
                     const AxisConvention& convention,
                     const CategoryMap& categories, double tolerance) {
  GoalCheck result;
  for (const auto& p : goal) {
    GoalCheckDetail detail;
    detail.predicate = p.describe();

    switch (p.kind) {
      case GoalPredicate::Kind::HeldEmpty:
        detail.pass = !scene.held.has_value();
        if (!detail.pass) detail.detail = "still holding " + scene.held->id;
        break;

      case GoalPredicate::Kind::Absent:
        detail.pass = !scene.has_object(p.object) &&
                      !(scene.held && scene.held->id == p.object);
        if (!detail.pass) detail.detail = p.object + " is present";
        break;

      case GoalPredicate::Kind::Relation: {
        const SceneObject* obj = scene.find(p.object);
        if (!obj) {
          if (scene.held && scene.held->id == p.object) {
            detail.pass = false;
            detail.detail = p.object + " is still held, not placed";
            break;
          }
          throw std::runtime_error("goal predicate references unknown object '" +
                                   p.object + "'");
        }
        auto target_ids = resolve_goal_ids(scene, categories, p.target);
        if (target_ids.empty()) {
          throw std::runtime_error("goal predicate references unknown target '" +
                                   p.target + "'");
        }
        std::vector<const SceneObject*> members;
        double r_t = 0.0;
        Vec3 centroid = Vec3::Zero();
        for (const auto& id : target_ids) {
          const SceneObject* m = scene.find(id);
          members.push_back(m);
          centroid += m->pose.translation;
          r_t = std::max(r_t, m->radius());
        }
        centroid /= static_cast<double>(members.size());

        if (is_mounting(p.specifier)) {
          const MountKind want = p.specifier == SpatialSpecifier::Inside
                                     ? MountKind::Contained
                                     : MountKind::Stacked;
          bool found = false;
          std::string other_kind;
          for (const auto& id : target_ids) {
            auto kind = scene.mount_kind(p.object, id);
            if (!kind) continue;
            if (*kind == want) {
              found = true;
              break;
            }
            other_kind = *kind == MountKind::Contained ? "contained" : "stacked";
          }
          detail.pass = found;
          if (!found) {
            detail.detail = other_kind.empty()
                                ? p.object + " is not mounted on " + p.target
                                : p.object + " is recorded as " + other_kind +
                                      ", not " +
                                      (want == MountKind::Contained
                                           ? "contained"
                                           : "stacked");
          }
        } else if (is_directional(p.specifier)) {
          Vec2 dir = xy(convention.direction(p.specifier)).normalized();
          Vec2 delta = xy(obj->pose.translation) - xy(centroid);
          double along = delta.dot(dir);
          double off = (delta - along * dir).norm();
          double min_along = r_t + obj->radius() - tolerance;
          detail.pass = along >= min_along && along > off;
          if (!detail.pass) {
            detail.detail = "offset along " + to_key(p.specifier) + " axis is " +
                            fmt("%.3f", along) + " (need >= " +
                            fmt("%.3f", min_along) + " and dominant over " +
                            fmt("%.3f", off) + ")";
          }
        } else {  // next_to / near
          double best_gap = std::numeric_limits<double>::infinity();
          for (const auto* m : members) {
            double gap =
                (xy(obj->pose.translation) - xy(m->pose.translation)).norm() -
                (m->radius() + obj->radius());
            best_gap = std::min(best_gap, gap);
          }
          const double max_gap = p.specifier == SpatialSpecifier::Near
                                     ? kNearMaxGap
                                     : kNextToMaxGap;
          detail.pass = best_gap >= -tolerance && best_gap <= max_gap;
          if (!detail.pass) {
            detail.detail = "nearest clearance gap is " + fmt("%.3f", best_gap) +
                            " (need within [" + fmt("%.3f", -tolerance) + ", " +
                            fmt("%.3f", max_gap) + "])";
          }
        }
        break;
      }
    }

    result.pass = result.pass && detail.pass;
    result.details.push_back(std::move(detail));
  }
  return result;
}

namespace {

EpisodeRecord run_one(const Scenario& scenario, const SuiteConfig& config) {
  EpisodeRecord record;
  record.scenario_id = scenario.id;
  record.category = scenario.category;

  try {
    Scene scene = load_scene_file(scenario.scene_path);
    ReplayBackend backend = ReplayBackend::from_file(scenario.fixture_path);
    ToolRegistry registry = default_tool_registry();
    EpisodeResult episode =
        run_episode(scenario.command, scene, registry, backend, config.episode);

    record.outcome = episode.transcript.outcome;
    record.reported_steps = episode.transcript.reported_steps();

    GoalCheck goal;
    if (scenario.category == ScenarioCategory::Infeasible) {
      record.success = episode.transcript.outcome == Outcome::Infeasible;
      if (!record.success) {
        record.detail = "expected an infeasible verdict, got " +
                        to_string(episode.transcript.outcome);
      }
    } else {
      goal = check_goal(episode.final_scene, scenario.goal, config.episode.convention,
                        config.episode.categories);
      record.success =
          episode.transcript.outcome == Outcome::Success && goal.pass;
      if (!record.success) {
        std::string why;
        if (episode.transcript.outcome != Outcome::Success) {
          why = "outcome " + to_string(episode.transcript.outcome);
          if (!episode.transcript.error.empty()) {
            why += " (" + episode.transcript.error + ")";
          }
        }
        for (const auto& d : goal.details) {
          if (d.pass) continue;
          if (!why.empty()) why += "; ";
          why += d.predicate + ": " + d.detail;
        }
        record.detail = why;
      }
    }

    if (!config.out_dir.empty()) {
      fs::path dir = fs::path(config.out_dir) / scenario.id;
      fs::create_directories(dir);
      write_text_file(dir / "transcript.txt",
                      serialize_transcript(episode.transcript));
      write_text_file(dir / "transcript.json",
                      transcript_to_json(episode.transcript).dump(2) + "\n");
      write_text_file(dir / "final_scene.json", save_scene(episode.final_scene));
      write_text_file(dir / "scene.svg", render_scene_svg(episode.final_scene));
      json meta = episode.metadata;
      meta["scenario_id"] = scenario.id;
      meta["category"] = to_string(scenario.category);
      meta["success"] = record.success;
      meta["detail"] = record.detail;
      json goals = json::array();
      for (const auto& d : goal.details) {
        goals.push_back(
            {{"predicate", d.predicate}, {"pass", d.pass}, {"detail", d.detail}});
      }
      meta["goal_checks"] = std::move(goals);
      write_text_file(dir / "run_meta.json", meta.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    record.outcome = Outcome::Failure;
    record.success = false;
    record.detail = e.what();
  }
  return record;
}

CategoryRow summarize(const std::vector<EpisodeRecord>& records) {
  CategoryRow row;
  long steps = 0;
  for (const auto& r : records) {
    row.count += 1;
    row.successes += r.success ? 1 : 0;
    steps += r.reported_steps;
  }
  if (row.count > 0) {
    row.success_rate = 100.0 * row.successes / row.count;
    row.avg_steps_exact = static_cast<double>(steps) / row.count;
    row.avg_steps_display = std::lround(row.avg_steps_exact);
  }
  return row;
}

}  // namespace

SuiteReport run_suite(const std::vector<Scenario>& scenarios,
                      const SuiteConfig& config) {
  if (scenarios.empty()) {
    throw std::invalid_argument("scenario suite is empty");
  }

  std::vector<EpisodeRecord> records(scenarios.size());
  const int workers = std::max(1, config.parallel);
  if (workers == 1) {
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      records[i] = run_one(scenarios[i], config);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i = next.fetch_add(1);
          if (i >= scenarios.size()) return;
          records[i] = run_one(scenarios[i], config);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  SuiteReport report;
  report.episodes = std::move(records);
  report.infeasibility_lexicon = config.episode.infeasibility_lexicon;

  std::vector<EpisodeRecord> simple, high, infeasible;
  for (const auto& r : report.episodes) {
    switch (r.category) {
      case ScenarioCategory::Simple: simple.push_back(r); break;
      case ScenarioCategory::HighLevel: high.push_back(r); break;
      case ScenarioCategory::Infeasible: infeasible.push_back(r); break;
    }
  }
  report.simple = summarize(simple);
  report.high_level = summarize(high);
  report.infeasible = summarize(infeasible);
  report.overall = summarize(report.episodes);
  return report;
}

std::string SuiteReport::to_text() const {
  std::ostringstream out;
  out << "Scenario suite results\n";
  out << "---------------------------------------------------------------\n";
  out << "category      scenarios  successful  success rate  avg steps\n";
  auto row = [&](const char* name, const CategoryRow& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s %10d %11d %12.1f%% %10ld\n", name,
                  r.count, r.successes, r.success_rate, r.avg_steps_display);
    out << buf;
  };
  row("simple", simple);
  row("high-level", high_level);
  row("infeasible", infeasible);
  row("overall", overall);
  out << "---------------------------------------------------------------\n";
  for (const auto& e : episodes) {
    out << (e.success ? "  ok   " : "  FAIL ") << e.scenario_id << " ["
        << to_string(e.category) << "] outcome=" << to_string(e.outcome)
        << " steps=" << e.reported_steps;
    if (!e.detail.empty()) out << " -- " << e.detail;
    out << "\n";
  }
  out << "notes:\n";
  out << "- a step is one executed tool call; the closing thought before the\n"
         "  final answer counts as one more step.\n";
  out << "- infeasible scenarios count as successful when the run ends with\n"
         "  an infeasible verdict and no placement.\n";
  out << "- infeasibility lexicon:";
  for (const auto& w : infeasibility_lexicon) out << " \"" << w << "\"";
  out << "\n";
  out << "- scenario set composition: 16 simple, 5 high-level, 3 infeasible;\n"
         "  commands and scenes are original to this repository.\n";
  return out.str();
}

json SuiteReport::to_json() const {
  auto row = [](const CategoryRow& r) {
    return json{{"count", r.count},
                {"successes", r.successes},
                {"success_rate", r.success_rate},
                {"avg_steps_exact", r.avg_steps_exact},
                {"avg_steps_display", r.avg_steps_display}};
  };
  json episodes_json = json::array();
  for (const auto& e : episodes) {
    episodes_json.push_back({{"scenario_id", e.scenario_id},
                             {"category", to_string(e.category)},
                             {"outcome", to_string(e.outcome)},
                             {"reported_steps", e.reported_steps},
                             {"success", e.success},
                             {"detail", e.detail}});
  }
  return json{{"simple", row(simple)},
              {"high_level", row(high_level)},
              {"infeasible", row(infeasible)},
              {"overall", row(overall)},
              {"episodes", std::move(episodes_json)},
              {"infeasibility_lexicon", infeasibility_lexicon}};
}

std::vector<SpatialEntry> load_spatial_entries(const std::string& path) {
  json doc = load_json_file(path, "spatial entries file");
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw std::runtime_error("spatial entries file needs an 'entries' array");
  }
  std::vector<SpatialEntry> out;
  for (const auto& je : doc["entries"]) {
    SpatialEntry e;
    try {
      e.id = je.at("id").get<std::string>();
      e.scene_path = resolve_relative(path, je.at("scene").get<std::string>());
      e.target = je.at("target").get<std::string>();
      e.held_diameter = je.value("held_diameter", 0.05);
    } catch (const json::exception& ex) {
      throw std::runtime_error("spatial entry in " + path +
                               " is malformed: " + ex.what());
    }
    if (!(e.held_diameter > 0.0)) {
      throw std::runtime_error("spatial entry '" + e.id +
                               "' needs a positive held_diameter");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) {
    throw std::runtime_error("spatial entries file lists no entries: " + path);
  }
  return out;
}

SpatialReport run_spatial_eval(const std::vector<SpatialEntry>& entries,
                               const SpatialConfig& config) {
  if (config.trials < 1) {
    throw std::invalid_argument("spatial eval needs at least one trial");
  }
  if (config.specifiers.empty()) {
    throw std::invalid_argument("spatial eval needs at least one specifier");
  }
  if (config.mode != PlacementMode::Geometric && config.backend == nullptr) {
    throw std::invalid_argument("llm placement mode needs a backend");
  }
  config.convention.validate();

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> noise(-config.sigma, config.sigma);

  std::vector<OffsetSample> samples;
  std::map<SpatialSpecifier, int> errors;

  for (const auto& entry : entries) {
    const Scene base = load_scene_file(entry.scene_path);
    std::vector<std::string> target_ids =
        resolve_goal_ids(base, config.categories, entry.target);
    if (target_ids.empty()) {
      throw std::invalid_argument("spatial entry '" + entry.id +
                                  "' has unresolvable target '" + entry.target +
                                  "'");
    }

    for (SpatialSpecifier spec : config.specifiers) {
      PlacementDirective directive;
      directive.specifier = spec;
      directive.targets = target_ids;
      directive.raw_phrase = to_string(spec) + " the " + entry.target;

      for (int trial = 0; trial < config.trials; ++trial) {
        Scene noisy = base;
        if (config.sigma > 0.0) {
          for (auto& o : noisy.objects) {
            if (std::find(target_ids.begin(), target_ids.end(), o.id) ==
                target_ids.end()) {
              continue;
            }
            o.pose.translation +=
                Vec3(noise(rng), noise(rng), noise(rng));
          }
        }

        Vec3 centroid = Vec3::Zero();
        for (const auto& id : target_ids) {
          centroid += noisy.find(id)->pose.translation;
        }
        centroid /= static_cast<double>(target_ids.size());

        try {
          Vec3 placed;
          if (config.mode == PlacementMode::Geometric) {
            placed = resolve_geometric(noisy, directive, entry.held_diameter,
                                       config.convention, config.placer);
          } else {
            SubPromptConfig sub;
            sub.prompt = config.placer_prompt;
            sub.params = config.placer;
            sub.on_validation_failure =
                config.mode == PlacementMode::Llm
                    ? LlmValidationPolicy::Error
                    : LlmValidationPolicy::FallbackToGeometric;
            placed = resolve_llm(noisy, directive, entry.held_diameter,
                                 *config.backend, config.convention, sub);
          }
          samples.push_back({spec, entry.id, placed, centroid});
        } catch (const PlacerError&) {
          errors[spec] += 1;
        }
      }
    }
  }

  SpatialReport report;
  OffsetStats stats;
  if (!samples.empty()) stats = offset_stats(samples);
  for (SpatialSpecifier spec : config.specifiers) {
    SpatialRow row;
    row.specifier = spec;
    auto it = stats.rows.find(spec);
    if (it != stats.rows.end()) row.offsets = it->second;
    auto eit = errors.find(spec);
    if (eit != errors.end()) row.errors = eit->second;
    report.rows.push_back(row);
  }
  return report;
}

std::string SpatialReport::to_text() const {
  std::ostringstream out;
  out << "Spatial placement statistics\n";
  out << "specifier    avg variance     mean dX    mean dY    mean dZ  "
         "samples  errors\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%-12s %13.6f %10.4f %10.4f %10.4f %8d %7d\n",
                  to_string(r.specifier).c_str(), r.offsets.avg_variance,
                  r.offsets.mean_delta.x(), r.offsets.mean_delta.y(),
                  r.offsets.mean_delta.z(), r.offsets.samples, r.errors);
    out << buf;
  }
  return out.str();
}

json SpatialReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"specifier", to_key(r.specifier)},
                         {"avg_variance", r.offsets.avg_variance},
                         {"mean_delta",
                          {r.offsets.mean_delta.x(), r.offsets.mean_delta.y(),
                           r.offsets.mean_delta.z()}},
                         {"samples", r.offsets.samples},
                         {"errors", r.errors}});
  }
  return json{{"rows", std::move(rows_json)}};
}

std::string RatingSummary::mean_str() const { return fmt("%.2f", mean); }
std::string RatingSummary::stddev_str() const { return fmt("%.2f", stddev); }

std::vector<RatingSummary> aggregate_ratings(const std::vector<RatingSet>& sets) {
  if (sets.empty()) {
    throw std::invalid_argument("no rating sets to aggregate");
  }
  std::vector<RatingSummary> out;
  for (const auto& set : sets) {
    if (set.ratings.size() < 2) {
      throw std::invalid_argument(
          "rating set '" + set.label +
          "' needs at least two ratings for a sample standard deviation");
    }
    double sum = 0.0;
    for (int r : set.ratings) {
      if (r < 1 || r > 10) {
        throw std::invalid_argument("rating set '" + set.label +
                                    "' contains out-of-range rating " +
                                    std::to_string(r));
      }
      sum += r;
    }
    RatingSummary summary;
    summary.label = set.label;
    summary.count = static_cast<int>(set.ratings.size());
    summary.mean = sum / summary.count;
    double sq = 0.0;
    for (int r : set.ratings) {
      double d = r - summary.mean;
      sq += d * d;
    }
    summary.stddev = std::sqrt(sq / (summary.count - 1));
    out.push_back(std::move(summary));
  }
  return out;
}

std::string ratings_to_text(const std::vector<RatingSummary>& summaries) {
  std::ostringstream out;
  out << "Arrangement ratings\n";
  out << "label                      mean   stddev   n\n";
  for (const auto& s : summaries) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-24s %6s %8s %3d\n", s.label.c_str(),
                  s.mean_str().c_str(), s.stddev_str().c_str(), s.count);
    out << buf;
  }
  return out.str();
}

}  // namespace tabletop
