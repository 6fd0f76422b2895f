#include <tabletop/react.hpp>

#include <fstream>
#include <sstream>

namespace tabletop {

namespace {

enum class Marker { Question, Thought, Action, ActionInput, Observation, Final };

struct MarkerSpec {
  Marker marker;
  const char* text;
};

// Order matters: "Action Input:" must be tried before "Action:".
constexpr MarkerSpec kMarkers[] = {
    {Marker::Question, "Question:"},
    {Marker::Thought, "Thought:"},
    {Marker::ActionInput, "Action Input:"},
    {Marker::Action, "Action:"},
    {Marker::Observation, "Observation:"},
    {Marker::Final, "Final Answer:"},
};

struct Segment {
  Marker marker;
  std::string value;
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty() && cur.back() == '\r') cur.pop_back();
  lines.push_back(cur);
  return lines;
}

bool match_marker(const std::string& line, Marker& marker, std::string& rest) {
  for (const auto& spec : kMarkers) {
    std::string m = spec.text;
    if (line.rfind(m, 0) == 0) {
      marker = spec.marker;
      rest = line.substr(m.size());
      return true;
    }
  }
  return false;
}

// Marker-anchored segmentation: a marker at the start of a line opens a
// segment; following non-marker lines extend it. Leading text before the
// first marker is ignored.
std::vector<Segment> segment_text(const std::string& text) {
  std::vector<Segment> segments;
  for (const std::string& line : split_lines(text)) {
    Marker marker;
    std::string rest;
    if (match_marker(line, marker, rest)) {
      segments.push_back({marker, rest});
    } else if (!segments.empty()) {
      segments.back().value += "\n" + line;
    }
  }
  for (auto& s : segments) s.value = trim(s.value);
  return segments;
}

bool line_starts_with_marker(const std::string& value) {
  for (const std::string& line : split_lines(value)) {
    Marker marker;
    std::string rest;
    if (match_marker(line, marker, rest)) return true;
  }
  return false;
}

void check_serializable(const std::string& field, const std::string& value) {
  if (value.empty()) {
    throw ProtocolError("cannot serialize step: field '" + field + "' is empty");
  }
  if (line_starts_with_marker(value)) {
    throw ProtocolError("cannot serialize step: field '" + field +
                        "' contains a line starting with a protocol marker");
  }
}

}  // namespace

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Unset: return "unset";
    case Outcome::Success: return "success";
    case Outcome::Infeasible: return "infeasible";
    case Outcome::Failure: return "failure";
    case Outcome::StepLimit: return "step_limit";
  }
  throw ProtocolError("unknown outcome");
}

ParsedTurn parse_model_output(const std::string& text) {
  ParsedTurn turn;
  auto segments = segment_text(text);
  if (segments.empty()) {
    turn.kind = ParsedTurn::Kind::Malformed;
    turn.note = "no Thought/Action/Final Answer markers found";
    return turn;
  }

  std::string thought;
  std::string action;
  bool have_action = false;

  for (const auto& seg : segments) {
    switch (seg.marker) {
      case Marker::Thought:
        if (!have_action) {
          thought = thought.empty() ? seg.value : thought + "\n" + seg.value;
        }
        break;
      case Marker::Action:
        if (!have_action) {
          action = seg.value;
          have_action = true;
        }
        break;
      case Marker::ActionInput:
        if (have_action) {
          if (thought.empty() || action.empty() || seg.value.empty()) {
            turn.kind = ParsedTurn::Kind::Malformed;
            turn.note = "step is missing a thought, action, or action input";
            return turn;
          }
          turn.kind = ParsedTurn::Kind::Step;
          turn.thought = thought;
          turn.action = action;
          turn.action_input = seg.value;
          return turn;  // anything after the first complete step is ignored
        }
        break;
      case Marker::Final:
        // Reached only before a complete step, so a final answer wins over an
        // incomplete trailing action.
        turn.kind = ParsedTurn::Kind::Final;
        turn.final_thought = thought;
        turn.final_answer = seg.value;
        return turn;
      case Marker::Observation:  // fabricated by the model; discard
      case Marker::Question:
        break;
    }
  }

  turn.kind = ParsedTurn::Kind::Malformed;
  turn.note = have_action ? "action has no Action Input"
                          : "no complete action or Final Answer";
  return turn;
}

std::string serialize_step(const ReActStep& step, bool include_observation) {
  check_serializable("thought", step.thought);
  check_serializable("action", step.action);
  check_serializable("action_input", step.action_input);
  std::string out = "Thought: " + step.thought + "\nAction: " + step.action +
                    "\nAction Input: " + step.action_input + "\n";
  if (include_observation) {
    check_serializable("observation", step.observation);
    out += "Observation: " + step.observation + "\n";
  }
  return out;
}

PromptTemplate PromptTemplate::from_text(std::string text) {
  if (trim(text).empty()) {
    throw ProtocolError("prompt template is empty");
  }
  return PromptTemplate(std::move(text));
}

PromptTemplate PromptTemplate::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProtocolError("cannot open prompt template: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string PromptTemplate::render(
    const std::map<std::string, std::string>& values) const {
  std::string out = text_;
  for (const auto& [key, value] : values) {
    const std::string needle = "{" + key + "}";
    bool found = false;
    std::size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
      out.replace(pos, needle.size(), value);
      pos += value.size();
      found = true;
    }
    if (!found) {
      throw ProtocolError("prompt template has no '" + needle + "' placeholder");
    }
  }
  return out;
}

std::string render_prompt(const PromptTemplate& tmpl,
                          const std::vector<ToolSpec>& tools,
                          const std::string& question,
                          const std::vector<HistoryItem>& history) {
  if (tools.empty()) {
    throw ProtocolError("cannot render prompt: tool registry is empty");
  }
  std::string tool_block;
  std::string tool_names;
  for (std::size_t i = 0; i < tools.size(); ++i) {
    if (i > 0) {
      tool_block += "\n";
      tool_names += ", ";
    }
    tool_block += tools[i].name + ": " + tools[i].description +
                  " Input: " + tools[i].input_signature;
    tool_names += tools[i].name;
  }

  std::string history_block;
  for (const auto& item : history) {
    if (const auto* step = std::get_if<ReActStep>(&item)) {
      history_block += serialize_step(*step, true);
    } else {
      history_block += "Observation: " + std::get<CorrectionNote>(item).text + "\n";
    }
  }

  return tmpl.render({{"tools", tool_block},
                      {"tool_names", tool_names},
                      {"question", question},
                      {"history", history_block}});
}

std::string serialize_transcript(const PlanTranscript& t) {
  std::string out = "Question: " + t.question + "\n";
  for (const auto& step : t.steps) {
    out += serialize_step(step, true);
  }
  // A final turn with an empty answer (a degenerate model reply) has no
  // grammar-valid text form; it stays visible in the JSON sidecar instead.
  if (!t.final_answer.empty()) {
    if (!t.final_thought.empty()) {
      check_serializable("final_thought", t.final_thought);
      out += "Thought: " + t.final_thought + "\n";
    }
    check_serializable("final_answer", t.final_answer);
    out += "Final Answer: " + t.final_answer + "\n";
  }
  return out;
}

PlanTranscript parse_transcript(const std::string& text) {
  auto segments = segment_text(text);
  if (segments.empty() || segments.front().marker != Marker::Question) {
    throw ProtocolError("transcript must begin with a 'Question:' line");
  }

  PlanTranscript t;
  t.question = segments.front().value;
  std::size_t i = 1;
  while (i < segments.size()) {
    if (segments[i].marker == Marker::Final) {
      t.final_answer = segments[i].value;
      ++i;
      if (i != segments.size()) {
        throw ProtocolError("content after the Final Answer line");
      }
      return t;
    }
    if (segments[i].marker != Marker::Thought) {
      throw ProtocolError("expected 'Thought:' to open a step, found '" +
                          segments[i].value + "'");
    }
    std::string thought = segments[i].value;
    ++i;
    if (i >= segments.size()) {
      throw ProtocolError("transcript ends after a dangling thought");
    }
    if (segments[i].marker == Marker::Final) {
      t.final_thought = thought;
      t.final_answer = segments[i].value;
      ++i;
      if (i != segments.size()) {
        throw ProtocolError("content after the Final Answer line");
      }
      return t;
    }
    if (segments[i].marker != Marker::Action) {
      throw ProtocolError("expected 'Action:' or 'Final Answer:' after a thought");
    }
    ReActStep step;
    step.thought = thought;
    step.action = segments[i].value;
    ++i;
    if (i >= segments.size() || segments[i].marker != Marker::ActionInput) {
      throw ProtocolError("expected 'Action Input:' after 'Action: " +
                          step.action + "'");
    }
    step.action_input = segments[i].value;
    ++i;
    if (i >= segments.size() || segments[i].marker != Marker::Observation) {
      throw ProtocolError("expected 'Observation:' after 'Action Input: " +
                          step.action_input + "'");
    }
    step.observation = segments[i].value;
    ++i;
    if (!step.complete() || step.observation.empty()) {
      throw ProtocolError("transcript step has an empty field");
    }
    t.steps.push_back(std::move(step));
  }
  return t;
}

nlohmann::json transcript_to_json(const PlanTranscript& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"thought", s.thought},
                     {"action", s.action},
                     {"action_input", s.action_input},
                     {"observation", s.observation}});
  }
  return nlohmann::json{{"question", t.question},
                        {"steps", std::move(steps)},
                        {"final_thought", t.final_thought},
                        {"final_answer", t.final_answer},
                        {"outcome", to_string(t.outcome)},
                        {"error", t.error},
                        {"corrections", t.corrections},
                        {"reported_steps", t.reported_steps()}};
}

}  // namespace tabletop
