#pragma once

#include <tabletop/llm.hpp>
#include <tabletop/placer.hpp>
#include <tabletop/react.hpp>
#include <tabletop/world.hpp>

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace tabletop {

struct AgentLimits {
  int max_steps = 15;
  int max_consecutive_malformed = 2;
};

enum class PlacementMode { Geometric, Llm, LlmFallback };
std::string to_string(PlacementMode m);

struct EpisodeConfig {
  AgentLimits limits;
  PlacementMode placement = PlacementMode::Geometric;
  AxisConvention convention;
  WorldParams world;  // keep in sync with convention via world_params_from
  PlacerParams placer;
  CategoryMap categories;
  PromptTemplate react_prompt;
  PromptTemplate placer_prompt;  // used by the llm placement modes
  std::vector<std::string> infeasibility_lexicon;
  double temperature = 0.0;
};

// Loads prompts, the default convention, the category map, and the
// infeasibility lexicon from an asset directory.
EpisodeConfig load_episode_config(const std::string& asset_dir);

struct DispatchResult {
  Scene scene;
  std::string observation;
  bool ok = true;       // the tool did what was asked
  bool placed = false;  // a place_object call succeeded
};

class ToolRegistry {
 public:
  using Handler = std::function<DispatchResult(
      const Scene&, const std::string& input, const EpisodeConfig&,
      ChatBackend* subprompt_backend)>;

  void add(ToolSpec spec, Handler handler);
  bool has(const std::string& name) const;
  const std::vector<ToolSpec>& specs() const { return specs_; }
  const Handler& handler(const std::string& name) const;

 private:
  std::vector<ToolSpec> specs_;
  std::vector<Handler> handlers_;
};

// get_object_list, pick_object, place_object, release_object.
ToolRegistry default_tool_registry();

// Routes an action to its tool. Unknown actions come back as a corrective
// observation (ok=false), not an exception.
DispatchResult dispatch(const ToolRegistry& registry, const std::string& action,
                        const std::string& input, const Scene& scene,
                        const EpisodeConfig& config,
                        ChatBackend* subprompt_backend);

// Success unless the answer is empty (Failure) or it hits the infeasibility
// lexicon while no placement succeeded (Infeasible).
Outcome classify_final(const std::string& final_answer, int successful_places,
                       const std::vector<std::string>& lexicon);

struct EpisodeResult {
  PlanTranscript transcript;
  Scene final_scene;
  nlohmann::json metadata;  // config digest, backend identity, limits, timings
};

// The ReAct loop: render prompt, call the backend, parse, dispatch, append to
// history; stop on Final Answer, the step limit, too many consecutive
// malformed turns, or a backend error (Failure with the error recorded).
EpisodeResult run_episode(const std::string& question, const Scene& scene,
                          const ToolRegistry& registry, ChatBackend& backend,
                          const EpisodeConfig& config);

}  // namespace tabletop
