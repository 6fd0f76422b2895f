#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tabletop {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::string input_signature;
};

struct ReActStep {
  std::string thought;
  std::string action;
  std::string action_input;
  std::string observation;

  bool complete() const {
    return !thought.empty() && !action.empty() && !action_input.empty();
  }
  bool operator==(const ReActStep& other) const {
    return thought == other.thought && action == other.action &&
           action_input == other.action_input &&
           observation == other.observation;
  }
};

// Issued after a malformed model turn; rendered into the prompt as a bare
// Observation line so the model sees the correction in context.
struct CorrectionNote {
  std::string text;
};

using HistoryItem = std::variant<ReActStep, CorrectionNote>;

enum class Outcome { Unset, Success, Infeasible, Failure, StepLimit };
std::string to_string(Outcome o);

struct PlanTranscript {
  std::string question;
  std::vector<ReActStep> steps;
  std::string final_thought;
  std::string final_answer;
  Outcome outcome = Outcome::Unset;
  std::string error;    // transport / limit detail, empty when clean
  int corrections = 0;  // malformed turns that drew a corrective observation

  bool has_final() const {
    return !final_thought.empty() || !final_answer.empty();
  }
  // Executed steps plus one for the final-thought turn when present.
  int reported_steps() const {
    return static_cast<int>(steps.size()) + (has_final() ? 1 : 0);
  }
};

// One raw model reply, classified.
struct ParsedTurn {
  enum class Kind { Step, Final, Malformed };
  Kind kind = Kind::Malformed;
  std::string thought;       // Step
  std::string action;        // Step
  std::string action_input;  // Step
  std::string final_thought; // Final
  std::string final_answer;  // Final
  std::string note;          // Malformed: what went wrong
};

// Extracts the first complete step or final answer from raw model output.
// Markers are recognized at line starts only; values run to the next marker
// with surrounding whitespace trimmed. A Final Answer wins over an incomplete
// action; anything after a complete step's Action Input (e.g. a fabricated
// Observation) is discarded. No usable turn => Malformed with a note.
ParsedTurn parse_model_output(const std::string& text);

// Canonical text form. Throws ProtocolError when a required field is empty or
// a field value contains a line that itself starts with a protocol marker
// (which could not round-trip).
std::string serialize_step(const ReActStep& step, bool include_observation = true);

// Simple {placeholder} template. render() throws ProtocolError when a provided
// key does not occur in the template (guards against a misedited asset file).
class PromptTemplate {
 public:
  PromptTemplate() = default;
  static PromptTemplate from_text(std::string text);
  static PromptTemplate load_file(const std::string& path);

  std::string render(const std::map<std::string, std::string>& values) const;
  const std::string& text() const { return text_; }

 private:
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

// Byte-stable prompt assembly: same inputs, same bytes. Throws ProtocolError
// on an empty tool registry.
std::string render_prompt(const PromptTemplate& tmpl,
                          const std::vector<ToolSpec>& tools,
                          const std::string& question,
                          const std::vector<HistoryItem>& history);

// Full-episode text form (Question line, step quads, optional final thought
// and Final Answer line). serialize(parse(text)) == text for grammar-valid
// text; parse throws ProtocolError naming the offending line otherwise.
std::string serialize_transcript(const PlanTranscript& t);
PlanTranscript parse_transcript(const std::string& text);

nlohmann::json transcript_to_json(const PlanTranscript& t);

}  // namespace tabletop
