#include <tabletop/agent.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>

namespace tabletop {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Models often quote tool inputs; strip one layer of quotes.
std::string strip_quotes(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

std::string read_lines_file(const std::string& path,
                            std::vector<std::string>& out) {
  std::ifstream in(path);
  if (!in) return "cannot open " + path;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return "";
}

constexpr const char* kCorrectionText =
    "Your reply did not follow the expected format. Start with 'Thought:', "
    "then give either 'Action:' with 'Action Input:' or 'Final Answer:', each "
    "at the beginning of its own line.";

}  // namespace

std::string to_string(PlacementMode m) {
  switch (m) {
    case PlacementMode::Geometric: return "geometric";
    case PlacementMode::Llm: return "llm";
    case PlacementMode::LlmFallback: return "llm-fallback";
  }
  throw std::invalid_argument("unknown placement mode");
}

EpisodeConfig load_episode_config(const std::string& asset_dir) {
  EpisodeConfig config;
  config.react_prompt =
      PromptTemplate::load_file(asset_dir + "/prompts/react_template.txt");
  config.placer_prompt =
      PromptTemplate::load_file(asset_dir + "/prompts/placer_subprompt.txt");
  config.convention =
      load_convention_file(asset_dir + "/conventions/default.json");
  config.world = world_params_from(config.convention);
  config.categories = CategoryMap::load_file(asset_dir + "/categories.json");
  std::string err = read_lines_file(asset_dir + "/lexicon/infeasibility.txt",
                                    config.infeasibility_lexicon);
  if (!err.empty()) {
    throw std::runtime_error("cannot load infeasibility lexicon: " + err);
  }
  if (config.infeasibility_lexicon.empty()) {
    throw std::runtime_error("infeasibility lexicon is empty");
  }
  return config;
}

void ToolRegistry::add(ToolSpec spec, Handler handler) {
  if (spec.name.empty()) {
    throw std::invalid_argument("tool name must not be empty");
  }
  if (has(spec.name)) {
    throw std::invalid_argument("duplicate tool name '" + spec.name + "'");
  }
  specs_.push_back(std::move(spec));
  handlers_.push_back(std::move(handler));
}

bool ToolRegistry::has(const std::string& name) const {
  return std::any_of(specs_.begin(), specs_.end(),
                     [&](const ToolSpec& s) { return s.name == name; });
}

const ToolRegistry::Handler& ToolRegistry::handler(const std::string& name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return handlers_[i];
  }
  throw std::invalid_argument("no tool named '" + name + "'");
}

ToolRegistry default_tool_registry() {
  ToolRegistry registry;

  registry.add(
      {"get_object_list",
       "Lists the ids of every object currently placed on the table.",
       "no input (pass an empty string)"},
      [](const Scene& scene, const std::string&, const EpisodeConfig&,
         ChatBackend*) -> DispatchResult {
        return {scene, object_list(scene), true, false};
      });

  registry.add(
      {"pick_object", "Picks up the named object from the table.",
       "the object id, e.g. 011_banana"},
      [](const Scene& scene, const std::string& input, const EpisodeConfig&,
         ChatBackend*) -> DispatchResult {
        WorldResult r = pick(scene, strip_quotes(input));
        return {std::move(r.scene), std::move(r.observation), r.ok, false};
      });

  registry.add(
      {"place_object",
       "Places the object you are holding relative to another object.",
       "a spatial phrase, e.g. to the left of the 029_plate"},
      [](const Scene& scene, const std::string& input,
         const EpisodeConfig& config,
         ChatBackend* subprompt_backend) -> DispatchResult {
        if (!scene.held) {
          return {scene,
                  "You are not holding any object. Pick an object before "
                  "placing it",
                  false, false};
        }
        const std::string held_id = scene.held->id;
        PlacementDirective directive;
        Vec3 position;
        try {
          directive = parse_directive(strip_quotes(input), scene, config.categories);
          switch (config.placement) {
            case PlacementMode::Geometric:
              position = resolve_geometric(scene, directive, scene.held->diameter,
                                           config.convention, config.placer);
              break;
            case PlacementMode::Llm:
            case PlacementMode::LlmFallback: {
              if (subprompt_backend == nullptr) {
                return {scene,
                        "Cannot place " + held_id +
                            ": no language backend is available for placement",
                        false, false};
              }
              SubPromptConfig sub;
              sub.prompt = config.placer_prompt;
              sub.params = config.placer;
              sub.on_validation_failure =
                  config.placement == PlacementMode::Llm
                      ? LlmValidationPolicy::Error
                      : LlmValidationPolicy::FallbackToGeometric;
              position = resolve_llm(scene, directive, scene.held->diameter,
                                     *subprompt_backend, config.convention, sub);
              break;
            }
          }
        } catch (const PlacerError& e) {
          return {scene, "Cannot place " + held_id + ": " + e.what(), false,
                  false};
        }

        PlacementRequest request;
        request.position = position;
        request.relation = directive.specifier;
        request.targets = directive.targets;
        request.phrase = directive.raw_phrase;
        WorldResult r = place_at(scene, request, config.world);
        return {std::move(r.scene), std::move(r.observation), r.ok, r.ok};
      });

  registry.add(
      {"release_object",
       "Puts the object you are holding down on a free spot of the table.",
       "no input (pass an empty string)"},
      [](const Scene& scene, const std::string&, const EpisodeConfig& config,
         ChatBackend*) -> DispatchResult {
        WorldResult r = release_free_space(scene, config.world);
        return {std::move(r.scene), std::move(r.observation), r.ok, false};
      });

  return registry;
}

DispatchResult dispatch(const ToolRegistry& registry, const std::string& action,
                        const std::string& input, const Scene& scene,
                        const EpisodeConfig& config,
                        ChatBackend* subprompt_backend) {
  const std::string name = trim(action);
  if (!registry.has(name)) {
    std::string names;
    for (const auto& s : registry.specs()) {
      if (!names.empty()) names += ", ";
      names += s.name;
    }
    return {scene, "Unknown tool '" + name + "'. Valid tools are: " + names,
            false, false};
  }
  return registry.handler(name)(scene, input, config, subprompt_backend);
}

Outcome classify_final(const std::string& final_answer, int successful_places,
                       const std::vector<std::string>& lexicon) {
  const std::string answer = trim(final_answer);
  if (answer.empty()) return Outcome::Failure;
  if (successful_places == 0) {
    const std::string folded = lower(answer);
    for (const auto& phrase : lexicon) {
      if (!phrase.empty() && folded.find(lower(phrase)) != std::string::npos) {
        return Outcome::Infeasible;
      }
    }
  }
  return Outcome::Success;
}

EpisodeResult run_episode(const std::string& question, const Scene& scene,
                          const ToolRegistry& registry, ChatBackend& backend,
                          const EpisodeConfig& config) {
  const auto start = std::chrono::steady_clock::now();

  EpisodeResult result;
  result.transcript.question = question;
  result.final_scene = scene;

  std::vector<HistoryItem> history;
  int successful_places = 0;
  int consecutive_malformed = 0;
  Outcome outcome = Outcome::Unset;

  while (true) {
    if (static_cast<int>(result.transcript.steps.size()) >=
        config.limits.max_steps) {
      outcome = Outcome::StepLimit;
      result.transcript.error = "step limit of " +
                                std::to_string(config.limits.max_steps) +
                                " reached";
      break;
    }

    ChatRequest request;
    request.temperature = config.temperature;
    request.stop = {"\nObservation:"};
    request.messages.push_back(
        {"user", render_prompt(config.react_prompt, registry.specs(), question,
                               history)});

    ChatResponse response;
    try {
      response = backend.complete(request);
    } catch (const BackendError& e) {
      outcome = Outcome::Failure;
      result.transcript.error = e.what();
      break;
    }

    ParsedTurn turn = parse_model_output(response.content);
    switch (turn.kind) {
      case ParsedTurn::Kind::Malformed: {
        ++consecutive_malformed;
        if (consecutive_malformed > config.limits.max_consecutive_malformed) {
          outcome = Outcome::Failure;
          result.transcript.error =
              "model output stayed malformed after " +
              std::to_string(config.limits.max_consecutive_malformed) +
              " corrections (" + turn.note + ")";
          break;
        }
        result.transcript.corrections += 1;
        history.push_back(CorrectionNote{kCorrectionText});
        continue;
      }
      case ParsedTurn::Kind::Step: {
        consecutive_malformed = 0;
        DispatchResult d = dispatch(registry, turn.action, turn.action_input,
                                    result.final_scene, config, &backend);
        result.final_scene = std::move(d.scene);
        if (d.placed) ++successful_places;
        ReActStep step;
        step.thought = turn.thought;
        step.action = trim(turn.action);
        step.action_input = turn.action_input;
        step.observation = d.observation;
        history.push_back(step);
        result.transcript.steps.push_back(std::move(step));
        continue;
      }
      case ParsedTurn::Kind::Final: {
        result.transcript.final_thought = turn.final_thought;
        result.transcript.final_answer = turn.final_answer;
        outcome = classify_final(turn.final_answer, successful_places,
                                 config.infeasibility_lexicon);
        if (outcome == Outcome::Failure) {
          result.transcript.error = "final answer was empty";
        }
        break;
      }
    }
    break;
  }

  result.transcript.outcome = outcome;

  const double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
  nlohmann::json limits{{"max_steps", config.limits.max_steps},
                        {"max_consecutive_malformed",
                         config.limits.max_consecutive_malformed}};
  nlohmann::json config_digest{
      {"placement", to_string(config.placement)},
      {"temperature", config.temperature},
      {"infeasibility_lexicon", config.infeasibility_lexicon},
      {"convention", nlohmann::json::parse(save_convention(config.convention))},
  };
  result.metadata = nlohmann::json{
      {"question", question},
      {"backend", backend.identity()},
      {"limits", std::move(limits)},
      {"config", std::move(config_digest)},
      {"outcome", to_string(outcome)},
      {"reported_steps", result.transcript.reported_steps()},
      {"successful_places", successful_places},
      {"corrections", result.transcript.corrections},
      {"wall_ms", wall_ms},
  };
  return result;
}

}  // namespace tabletop
