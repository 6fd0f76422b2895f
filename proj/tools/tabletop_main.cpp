#include <tabletop/agent.hpp>
#include <tabletop/harness.hpp>
#include <tabletop/render.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace tabletop;

#ifndef TABLETOP_ASSET_DIR
#define TABLETOP_ASSET_DIR "assets"
#endif

namespace {

struct CommonOpts {
  std::string backend = "replay";
  std::string endpoint;
  std::string model = "default";
  double temperature = 0.0;
  int max_steps = 15;
  std::string placement = "geometric";
  std::string convention_path;
  std::string fixture;
  std::uint64_t seed = 0;
  std::string out = "tabletop_out";
  int parallel = 1;
  std::string assets = TABLETOP_ASSET_DIR;
  std::string config_path;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  // Config files are applied by hand after parsing (see apply_config) so the
  // precedence stays: command line > environment > config file. CLI11's
  // built-in set_config reads the file before the environment, which would
  // invert the last two.
  cmd->add_option("--config", o.config_path,
                  "Read unset options from an INI file");
  cmd->add_option("--backend", o.backend, "Language backend: replay, http, capture")
      ->envname("TABLETOP_BACKEND")
      ->check(CLI::IsMember({"replay", "http", "capture"}));
  cmd->add_option("--endpoint", o.endpoint,
                  "HTTP endpoint base, e.g. http://127.0.0.1:8080/v1")
      ->envname("TABLETOP_ENDPOINT");
  cmd->add_option("--model", o.model, "Model name sent to the HTTP backend")
      ->envname("TABLETOP_MODEL");
  cmd->add_option("--temperature", o.temperature, "Sampling temperature")
      ->envname("TABLETOP_TEMPERATURE");
  cmd->add_option("--max-steps", o.max_steps, "Step budget per episode")
      ->envname("TABLETOP_MAX_STEPS");
  cmd->add_option("--placement", o.placement,
                  "Placement mode: geometric, llm, llm-fallback")
      ->envname("TABLETOP_PLACEMENT")
      ->check(CLI::IsMember({"geometric", "llm", "llm-fallback"}));
  cmd->add_option("--convention", o.convention_path,
                  "Axis convention JSON (defaults to the asset pack)")
      ->envname("TABLETOP_CONVENTION");
  cmd->add_option("--fixture", o.fixture,
                  "Replay fixture to read, or capture output path")
      ->envname("TABLETOP_FIXTURE");
  cmd->add_option("--seed", o.seed, "Random seed for noise draws")
      ->envname("TABLETOP_SEED");
  cmd->add_option("--out", o.out, "Directory for run artifacts")
      ->envname("TABLETOP_OUT");
  cmd->add_option("--parallel", o.parallel, "Worker threads for the suite")
      ->envname("TABLETOP_PARALLEL");
  cmd->add_option("--assets", o.assets, "Asset directory (prompts, scenarios)")
      ->envname("TABLETOP_ASSETS");
}

int usage_error(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return 2;
}

std::string trim_copy(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Fills options the command line and environment left untouched from a flat
// INI file ("max-steps=7"). Keys mirror the long option names.
void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string entry = trim_copy(line);
    if (entry.empty() || entry[0] == '#' || entry[0] == ';' || entry[0] == '[') {
      continue;
    }
    auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config file " + path + " line " +
                                  std::to_string(line_no) +
                                  " is not a key=value pair");
    }
    std::string key = trim_copy(entry.substr(0, eq));
    std::string value = trim_copy(entry.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    CLI::Option* opt = nullptr;
    try {
      opt = cmd->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw std::invalid_argument("config file " + path + " names unknown option '" +
                                  key + "'");
    }
    if (opt->count() > 0) continue;  // flag or environment already set it
    opt->add_result(value);
    opt->run_callback();
  }
}

PlacementMode placement_from(const std::string& name) {
  if (name == "geometric") return PlacementMode::Geometric;
  if (name == "llm") return PlacementMode::Llm;
  return PlacementMode::LlmFallback;
}

EpisodeConfig make_episode_config(const CommonOpts& o) {
  EpisodeConfig config = load_episode_config(o.assets);
  if (!o.convention_path.empty()) {
    config.convention = load_convention_file(o.convention_path);
    config.world = world_params_from(config.convention);
  }
  config.limits.max_steps = o.max_steps;
  config.placement = placement_from(o.placement);
  config.temperature = o.temperature;
  return config;
}

struct BackendBundle {
  std::unique_ptr<ChatBackend> inner;
  std::unique_ptr<ChatBackend> wrapper;  // capture mode only
  ChatBackend* use = nullptr;
};

BackendBundle make_backend(const CommonOpts& o) {
  BackendBundle bundle;
  if (o.backend == "replay") {
    if (o.fixture.empty()) {
      throw std::invalid_argument("the replay backend needs --fixture FILE");
    }
    bundle.inner = std::make_unique<ReplayBackend>(ReplayBackend::from_file(o.fixture));
  } else {
    if (o.endpoint.empty()) {
      throw std::invalid_argument("the " + o.backend +
                                  " backend needs --endpoint URL");
    }
    HttpConfig http;
    http.endpoint = o.endpoint;
    http.model = o.model;
    bundle.inner = std::make_unique<HttpBackend>(http);
    if (o.backend == "capture") {
      if (o.fixture.empty()) {
        throw std::invalid_argument(
            "the capture backend needs --fixture FILE to write");
      }
      bundle.wrapper = std::make_unique<CaptureBackend>(*bundle.inner, o.fixture);
    }
  }
  bundle.use = bundle.wrapper ? bundle.wrapper.get() : bundle.inner.get();
  return bundle;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_episode_artifacts(const fs::path& dir, const EpisodeResult& result,
                             const nlohmann::json& extra_meta) {
  write_file(dir / "transcript.txt", serialize_transcript(result.transcript));
  write_file(dir / "transcript.json",
             transcript_to_json(result.transcript).dump(2) + "\n");
  write_file(dir / "final_scene.json", save_scene(result.final_scene));
  write_file(dir / "scene.svg", render_scene_svg(result.final_scene));
  nlohmann::json meta = result.metadata;
  for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
  write_file(dir / "run_meta.json", meta.dump(2) + "\n");
}

nlohmann::json options_json(const CommonOpts& o) {
  return nlohmann::json{{"backend", o.backend},   {"model", o.model},
                        {"max_steps", o.max_steps}, {"placement", o.placement},
                        {"seed", o.seed},         {"out", o.out},
                        {"parallel", o.parallel}};
}

int cmd_run(const CommonOpts& o, const std::string& scene_path,
            const std::string& question, const std::string& expect) {
  Scene scene = load_scene_file(scene_path);
  EpisodeConfig config = make_episode_config(o);
  BackendBundle backend = make_backend(o);
  ToolRegistry registry = default_tool_registry();

  EpisodeResult result =
      run_episode(question, scene, registry, *backend.use, config);
  write_episode_artifacts(fs::path(o.out), result,
                          nlohmann::json{{"cli", options_json(o)}});

  std::cout << serialize_transcript(result.transcript);
  std::cout << "outcome: " << to_string(result.transcript.outcome) << "\n";
  if (!result.transcript.error.empty()) {
    std::cout << "error: " << result.transcript.error << "\n";
  }

  const Outcome want =
      expect == "infeasible" ? Outcome::Infeasible : Outcome::Success;
  return result.transcript.outcome == want ? 0 : 1;
}

int cmd_repl(const CommonOpts& o, const std::string& scene_path) {
  Scene scene = load_scene_file(scene_path);
  EpisodeConfig config = make_episode_config(o);
  BackendBundle backend = make_backend(o);
  ToolRegistry registry = default_tool_registry();

  int render_count = 0;
  std::string line;
  std::cout << "tabletop repl; :scene shows the table, :render draws it, "
               ":quit leaves\n";
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == ":quit") break;
    if (line.empty()) continue;
    if (line == ":scene") {
      std::cout << object_list(scene) << "\n";
      if (scene.held) std::cout << "held: " << scene.held->id << "\n";
      continue;
    }
    if (line == ":render") {
      fs::path path =
          fs::path(o.out) / ("repl_scene_" + std::to_string(++render_count) + ".svg");
      write_file(path, render_scene_svg(scene));
      std::cout << "wrote " << path.string() << "\n";
      continue;
    }
    EpisodeResult result = run_episode(line, scene, registry, *backend.use, config);
    std::cout << serialize_transcript(result.transcript);
    std::cout << "outcome: " << to_string(result.transcript.outcome) << "\n";
    scene = result.final_scene;
  }
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& scenario_dir) {
  std::vector<Scenario> scenarios = load_scenario_dir(scenario_dir);
  SuiteConfig config;
  config.episode = make_episode_config(o);
  config.out_dir = o.out;
  config.parallel = o.parallel;

  SuiteReport report = run_suite(scenarios, config);
  std::cout << report.to_text();
  write_file(fs::path(o.out) / "report.txt", report.to_text());
  write_file(fs::path(o.out) / "report.json", report.to_json().dump(2) + "\n");

  return report.overall.successes == report.overall.count ? 0 : 1;
}

int cmd_spatial(const CommonOpts& o, const std::string& entries_path,
                int trials, double sigma, const std::string& specifiers) {
  SpatialConfig config;
  config.trials = trials;
  config.sigma = sigma;
  config.seed = o.seed;
  EpisodeConfig episode = make_episode_config(o);
  config.convention = episode.convention;
  config.placer = episode.placer;
  config.categories = episode.categories;
  config.placer_prompt = episode.placer_prompt;
  config.mode = placement_from(o.placement);

  BackendBundle backend;
  if (config.mode != PlacementMode::Geometric) {
    backend = make_backend(o);
    config.backend = backend.use;
  }

  if (!specifiers.empty()) {
    config.specifiers.clear();
    std::stringstream ss(specifiers);
    std::string key;
    while (std::getline(ss, key, ',')) {
      auto spec = specifier_from_key(key);
      if (!spec) {
        throw std::invalid_argument("unknown specifier key '" + key + "'");
      }
      config.specifiers.push_back(*spec);
    }
  }

  SpatialReport report =
      run_spatial_eval(load_spatial_entries(entries_path), config);
  std::cout << report.to_text();
  write_file(fs::path(o.out) / "spatial.txt", report.to_text());
  write_file(fs::path(o.out) / "spatial.json", report.to_json().dump(2) + "\n");

  for (const auto& row : report.rows) {
    if (row.errors > 0) return 1;
  }
  return 0;
}

int cmd_render(const CommonOpts& o, const std::string& scene_path) {
  Scene scene = load_scene_file(scene_path);
  fs::path path = fs::path(o.out) / "scene.svg";
  write_file(path, render_scene_svg(scene));
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_ratings(const std::string& input_path) {
  std::ifstream in(input_path);
  if (!in) throw std::runtime_error("cannot open ratings file: " + input_path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (!doc.is_array()) {
    throw std::invalid_argument(
        "ratings file must be an array of {label, ratings} objects");
  }
  std::vector<RatingSet> sets;
  for (const auto& js : doc) {
    RatingSet set;
    set.label = js.at("label").get<std::string>();
    for (const auto& r : js.at("ratings")) set.ratings.push_back(r.get<int>());
    sets.push_back(std::move(set));
  }
  std::cout << ratings_to_text(aggregate_ratings(sets));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated tabletop rearrangement agent"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string scene_path, question, expect = "success";
  std::string scenario_dir, entries_path, specifiers, ratings_path;
  int trials = 1;
  double sigma = 0.0;

  CLI::App* run = app.add_subcommand("run", "Run one question against a scene");
  add_common(run, opts);
  run->add_option("--scene", scene_path, "Scene JSON file")->required();
  run->add_option("--question", question, "Instruction for the agent")->required();
  run->add_option("--expect", expect, "Outcome that maps to exit code 0")
      ->check(CLI::IsMember({"success", "infeasible"}));

  CLI::App* repl = app.add_subcommand("repl", "Interactive session on a scene");
  add_common(repl, opts);
  repl->add_option("--scene", scene_path, "Scene JSON file")->required();

  CLI::App* eval = app.add_subcommand("eval", "Run a scenario suite");
  add_common(eval, opts);
  eval->add_option("--scenarios", scenario_dir, "Directory of scenario JSON files");

  CLI::App* spatial =
      app.add_subcommand("spatial-eval", "Placement statistics over scenes");
  add_common(spatial, opts);
  spatial->add_option("--entries", entries_path, "Spatial entries JSON file");
  spatial->add_option("--trials", trials, "Trials per entry and specifier");
  spatial->add_option("--sigma", sigma, "Uniform pose noise amplitude (meters)");
  spatial->add_option("--specifiers", specifiers,
                      "Comma-separated specifier keys (default: all)");

  CLI::App* render = app.add_subcommand("render", "Draw a scene to SVG");
  add_common(render, opts);
  render->add_option("--scene", scene_path, "Scene JSON file")->required();

  CLI::App* ratings = app.add_subcommand("ratings", "Aggregate rating sets");
  ratings->add_option("--input", ratings_path, "JSON array of rating sets")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    for (CLI::App* cmd : {run, repl, eval, spatial, render}) {
      if (cmd->parsed()) apply_config(cmd, opts.config_path);
    }
    if (run->parsed()) return cmd_run(opts, scene_path, question, expect);
    if (repl->parsed()) return cmd_repl(opts, scene_path);
    if (eval->parsed()) {
      if (scenario_dir.empty()) scenario_dir = opts.assets + "/scenarios";
      return cmd_eval(opts, scenario_dir);
    }
    if (spatial->parsed()) {
      if (entries_path.empty()) {
        entries_path = opts.assets + "/spatial/entries.json";
      }
      return cmd_spatial(opts, entries_path, trials, sigma, specifiers);
    }
    if (render->parsed()) return cmd_render(opts, scene_path);
    if (ratings->parsed()) return cmd_ratings(ratings_path);
  } catch (const std::invalid_argument& e) {
    return usage_error(e.what());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return usage_error("no subcommand selected");
}
