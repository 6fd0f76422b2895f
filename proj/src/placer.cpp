#include <tabletop/placer.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace tabletop {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Relation surface forms, tried longest-first at each position so e.g.
// "in front of" beats "in".
struct SurfaceForm {
  const char* text;
  SpatialSpecifier specifier;
};

constexpr SurfaceForm kSurfaceForms[] = {
    {"to the left of", SpatialSpecifier::Left},
    {"to the right of", SpatialSpecifier::Right},
    {"in front of", SpatialSpecifier::InFront},
    {"on top of", SpatialSpecifier::OnTop},
    {"close to", SpatialSpecifier::Near},
    {"next to", SpatialSpecifier::NextTo},
    {"left of", SpatialSpecifier::Left},
    {"right of", SpatialSpecifier::Right},
    {"beside", SpatialSpecifier::NextTo},
    {"behind", SpatialSpecifier::Behind},
    {"inside", SpatialSpecifier::Inside},
    {"onto", SpatialSpecifier::OnTop},
    {"near", SpatialSpecifier::Near},
    {"into", SpatialSpecifier::Inside},
    {"in", SpatialSpecifier::Inside},
    {"on", SpatialSpecifier::OnTop},
};

// "plates" -> {plates, plate, plat}; trying every form sidesteps guessing
// whether the singular ends in 'e'.
std::vector<std::string> plural_forms(const std::string& word) {
  std::vector<std::string> forms{word};
  if (word.size() > 1 && word.back() == 's') {
    forms.push_back(word.substr(0, word.size() - 1));
    if (word.size() > 2 && word[word.size() - 2] == 'e') {
      forms.push_back(word.substr(0, word.size() - 2));
    }
  }
  return forms;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (is_word_char(c)) {
      cur += c;
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c);
  });
}

// Id words, split on underscores as well, numeric prefixes dropped:
// "003_cracker_box" -> {cracker, box}.
std::vector<std::string> id_name_tokens(const std::string& id) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : lower(id)) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  std::erase_if(tokens, [](const std::string& t) { return all_digits(t); });
  return tokens;
}

Vec2 xy(const Vec3& v) { return Vec2(v.x(), v.y()); }

struct TargetGroup {
  std::vector<const SceneObject*> members;
  Vec3 centroid = Vec3::Zero();
  double max_radius = 0.0;
};

TargetGroup gather_targets(const Scene& scene,
                           const PlacementDirective& directive) {
  TargetGroup group;
  for (const auto& id : directive.targets) {
    const SceneObject* obj = scene.find(id);
    if (!obj) {
      throw PlacerError(PlacerError::Kind::TargetMissing,
                        "target '" + id + "' is not in the scene");
    }
    group.members.push_back(obj);
  }
  if (group.members.empty()) {
    throw PlacerError(PlacerError::Kind::TargetMissing,
                      "placement '" + directive.raw_phrase +
                          "' resolved no targets in the scene");
  }
  Vec3 sum = Vec3::Zero();
  for (const auto* m : group.members) {
    sum += m->pose.translation;
    group.max_radius = std::max(group.max_radius, m->radius());
  }
  group.centroid = sum / static_cast<double>(group.members.size());
  return group;
}

// Smallest distance along `dir` from the group centroid at which a sphere of
// radius r_h clears every member by construction: each member contributes
// its along-axis offset plus the chord needed to clear its center laterally.
double clearance_distance(const TargetGroup& group, const Vec2& dir,
                          double r_h, double margin) {
  const double reach = group.max_radius + r_h;
  double need = reach + margin;
  for (const auto* m : group.members) {
    Vec2 offset = xy(m->pose.translation) - xy(group.centroid);
    double along = offset.dot(dir);
    double lateral2 = (offset - along * dir).squaredNorm();
    double chord2 = reach * reach - lateral2;
    if (chord2 > 0.0) {
      need = std::max(need, along + std::sqrt(chord2) + margin);
    } else {
      need = std::max(need, along + margin);
    }
  }
  return need;
}

struct CandidateCheck {
  bool ok = true;
  std::string why;
};

CandidateCheck check_candidate(const Scene& scene, const Vec2& p, double r_h,
                               const std::set<std::string>& exempt,
                               const WorldParams& world) {
  if (!scene.table_bounds.contains(p)) {
    return {false, "position lies outside the table bounds"};
  }
  for (const auto& o : scene.objects) {
    if (exempt.count(o.id)) continue;
    double dist = (p - xy(o.pose.translation)).norm();
    if (dist < r_h + o.radius() - world.overlap_tolerance) {
      return {false, "position collides with " + o.id};
    }
  }
  return {true, ""};
}

}  // namespace

CategoryMap CategoryMap::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("category map is not valid JSON: ") +
                                e.what());
  }
  if (!doc.is_object()) {
    throw std::invalid_argument("category map must be a JSON object");
  }
  CategoryMap map;
  std::set<std::string> seen;
  for (const auto& [key, value] : doc.items()) {
    std::vector<std::string> cats;
    if (value.is_string()) {
      cats.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      for (const auto& v : value) {
        if (!v.is_string()) {
          throw std::invalid_argument("category values must be strings");
        }
        cats.push_back(v.get<std::string>());
      }
    } else {
      throw std::invalid_argument("category map values must be strings or arrays");
    }
    for (const auto& c : cats) {
      if (seen.insert(c).second) map.known_categories_.push_back(c);
    }
    map.by_prefix_[key] = std::move(cats);
  }
  return map;
}

CategoryMap CategoryMap::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open category map: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::vector<std::string> CategoryMap::categories_of(const std::string& id) const {
  auto it = by_prefix_.find(id);
  if (it != by_prefix_.end()) return it->second;
  // Allow keys like "011" to cover "011_banana".
  for (const auto& [prefix, cats] : by_prefix_) {
    if (id.size() > prefix.size() && id.compare(0, prefix.size(), prefix) == 0 &&
        id[prefix.size()] == '_') {
      return cats;
    }
  }
  return {};
}

std::vector<std::string> CategoryMap::members(const Scene& scene,
                                              const std::string& category) const {
  std::vector<std::string> out;
  for (const auto& o : scene.objects) {
    auto cats = categories_of(o.id);
    if (std::find(cats.begin(), cats.end(), category) != cats.end()) {
      out.push_back(o.id);
    }
  }
  return out;
}

bool CategoryMap::has_category(const std::string& category) const {
  return std::find(known_categories_.begin(), known_categories_.end(),
                   category) != known_categories_.end();
}

PlacementDirective parse_directive(const std::string& phrase,
                                   const Scene& scene,
                                   const CategoryMap& categories) {
  const std::string text = lower(trim(phrase));
  if (text.empty()) {
    throw PlacerError(PlacerError::Kind::UnknownSpecifier,
                      "empty placement phrase");
  }

  // The longest word-boundary match anywhere in the phrase wins ("on the
  // left of the plate" reads as left, not on-top); ties go to the earliest.
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  const SurfaceForm* best = nullptr;
  for (const auto& form : kSurfaceForms) {
    const std::string needle = form.text;
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
      bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
      std::size_t end = pos + needle.size();
      bool right_ok = end >= text.size() || !is_word_char(text[end]);
      if (left_ok && right_ok) {
        if (needle.size() > best_len ||
            (needle.size() == best_len && pos < best_pos)) {
          best_pos = pos;
          best_len = needle.size();
          best = &form;
        }
        break;
      }
      ++pos;
    }
  }
  if (!best) {
    throw PlacerError(PlacerError::Kind::UnknownSpecifier,
                      "no spatial relation recognized in '" + trim(phrase) + "'");
  }

  PlacementDirective directive;
  directive.specifier = best->specifier;
  directive.raw_phrase = trim(phrase);

  std::string noun = trim(text.substr(best_pos + std::string(best->text).size()));
  if (noun.rfind("the ", 0) == 0) noun = trim(noun.substr(4));
  if (noun.empty()) {
    throw PlacerError(PlacerError::Kind::UnknownTarget,
                      "placement phrase '" + trim(phrase) + "' names no target");
  }

  // 1. Exact id.
  for (const auto& o : scene.objects) {
    if (lower(o.id) == noun) {
      directive.targets = {o.id};
      return directive;
    }
  }

  // 2. Name tokens: every word of the noun must appear among the id's
  //    non-numeric tokens ("cracker box" matches "003_cracker_box"),
  //    tolerating plural phrasing.
  const std::vector<std::string> noun_tokens = tokenize(noun);
  if (!noun_tokens.empty()) {
    std::vector<std::string> matched;
    for (const auto& o : scene.objects) {
      const std::vector<std::string> id_tokens = id_name_tokens(o.id);
      bool all_found = std::all_of(
          noun_tokens.begin(), noun_tokens.end(), [&](const std::string& nt) {
            for (const auto& form : plural_forms(nt)) {
              if (std::find(id_tokens.begin(), id_tokens.end(), form) !=
                  id_tokens.end()) {
                return true;
              }
            }
            return false;
          });
      if (all_found && !id_tokens.empty()) matched.push_back(o.id);
    }
    if (!matched.empty()) {
      directive.targets = std::move(matched);
      return directive;
    }
  }

  // 3. Category noun, singular or plural ("fruits" -> fruit members).
  std::vector<std::string> category_candidates = plural_forms(noun);
  if (!noun_tokens.empty() && noun_tokens.back() != noun) {
    for (auto& form : plural_forms(noun_tokens.back())) {
      category_candidates.push_back(std::move(form));
    }
  }
  for (const std::string& candidate : category_candidates) {
    if (categories.has_category(candidate)) {
      auto members = categories.members(scene, candidate);
      if (!members.empty()) {
        directive.targets = std::move(members);
        return directive;
      }
    }
  }

  throw PlacerError(PlacerError::Kind::UnknownTarget,
                    "cannot resolve placement target '" + noun +
                        "' against the scene");
}

Vec3 resolve_geometric(const Scene& scene, const PlacementDirective& directive,
                       double held_diameter, const AxisConvention& convention,
                       const PlacerParams& params) {
  if (!(held_diameter > 0.0) || !std::isfinite(held_diameter)) {
    throw std::invalid_argument("held diameter must be positive");
  }
  convention.validate();
  const TargetGroup group = gather_targets(scene, directive);
  const double r_h = held_diameter / 2.0;
  const double r_t = group.max_radius;
  const WorldParams world = world_params_from(convention);

  std::set<std::string> exempt;
  for (const auto* m : group.members) exempt.insert(m->id);

  auto directional_candidate = [&](SpatialSpecifier dir_spec,
                                   double margin) -> Vec2 {
    Vec3 dir3 = convention.direction(dir_spec);
    Vec2 dir = xy(dir3).normalized();
    double dist = clearance_distance(group, dir, r_h, margin);
    return xy(group.centroid) + dist * dir;
  };

  switch (directive.specifier) {
    case SpatialSpecifier::Left:
    case SpatialSpecifier::Right:
    case SpatialSpecifier::InFront:
    case SpatialSpecifier::Behind: {
      Vec2 p = directional_candidate(directive.specifier, params.placement_margin);
      auto check = check_candidate(scene, p, r_h, exempt, world);
      if (!check.ok) {
        throw PlacerError(PlacerError::Kind::NoValidPlacement,
                          "cannot place " + to_string(directive.specifier) +
                              " of the target: " + check.why);
      }
      return Vec3(p.x(), p.y(), convention.resting_z(r_h));
    }

    case SpatialSpecifier::NextTo:
    case SpatialSpecifier::Near: {
      const double margin = directive.specifier == SpatialSpecifier::Near
                                ? params.near_factor * params.placement_margin
                                : params.placement_margin;
      std::string reasons;
      for (SpatialSpecifier dir_spec : convention.scan_order) {
        Vec2 p = directional_candidate(dir_spec, margin);
        auto check = check_candidate(scene, p, r_h, exempt, world);
        if (check.ok) return Vec3(p.x(), p.y(), convention.resting_z(r_h));
        if (!reasons.empty()) reasons += "; ";
        reasons += to_key(dir_spec) + ": " + check.why;
      }
      throw PlacerError(PlacerError::Kind::NoValidPlacement,
                        "no side of the target admits the placement (" +
                            reasons + ")");
    }

    case SpatialSpecifier::OnTop:
    case SpatialSpecifier::Inside: {
      if (directive.specifier == SpatialSpecifier::Inside && r_h > r_t) {
        throw PlacerError(PlacerError::Kind::NoValidPlacement,
                          "the held object does not fit inside the target");
      }
      const double top = convention.height_of(group.centroid) + r_t + r_h;
      const double base = convention.height_of(group.centroid) - r_t + r_h;
      const double z = convention.up.z() *
                       (directive.specifier == SpatialSpecifier::OnTop ? top : base);

      // Mounted placements never collide with the target stack itself.
      for (const auto& e : scene.mount_component(directive.targets)) {
        exempt.insert(e);
      }

      std::vector<Vec2> candidates{xy(group.centroid)};
      if (r_t > r_h) {
        // Nudge within the target footprint when the centroid is blocked
        // (e.g. something small already sits in the bowl).
        for (double f : {0.5, 1.0}) {
          for (SpatialSpecifier dir_spec : convention.scan_order) {
            Vec2 dir = xy(convention.direction(dir_spec)).normalized();
            candidates.push_back(xy(group.centroid) + f * (r_t - r_h) * dir);
          }
        }
      }
      std::string why;
      for (const Vec2& p : candidates) {
        auto check = check_candidate(scene, p, r_h, exempt, world);
        if (check.ok) return Vec3(p.x(), p.y(), z);
        if (why.empty()) why = check.why;
      }
      throw PlacerError(PlacerError::Kind::NoValidPlacement,
                        "no clear spot " + to_string(directive.specifier) +
                            " the target: " + why);
    }
  }
  throw PlacerError(PlacerError::Kind::UnknownSpecifier, "unknown specifier");
}

Vec3 resolve_llm(const Scene& scene, const PlacementDirective& directive,
                 double held_diameter, ChatBackend& backend,
                 const AxisConvention& convention, const SubPromptConfig& config) {
  const TargetGroup group = gather_targets(scene, directive);
  const double r_h = held_diameter / 2.0;
  const WorldParams world = world_params_from(convention);

  // Self-contained exchange: the main agent transcript never sees it.
  std::ostringstream layout;
  for (const auto* m : group.members) {
    layout << m->id << " at (" << m->pose.translation.x() << ", "
           << m->pose.translation.y() << ", " << m->pose.translation.z()
           << ") diameter " << m->diameter << "\n";
  }
  std::ostringstream bounds;
  bounds << "x in [" << scene.table_bounds.min.x() << ", "
         << scene.table_bounds.max.x() << "], y in ["
         << scene.table_bounds.min.y() << ", " << scene.table_bounds.max.y()
         << "]";

  ChatRequest request;
  request.temperature = 0.0;
  request.messages.push_back(
      {"user", config.prompt.render({{"relation", to_string(directive.specifier)},
                                     {"targets", layout.str()},
                                     {"bounds", bounds.str()},
                                     {"held_diameter", std::to_string(held_diameter)}})});

  auto ask = [&](const ChatRequest& req) -> ChatResponse {
    try {
      return backend.complete(req);
    } catch (const BackendError& e) {
      throw PlacerError(PlacerError::Kind::BackendUnavailable,
                        std::string("placement backend unavailable: ") +
                            e.what());
    }
  };

  auto fall_back = [&](const std::string& why) -> Vec3 {
    if (config.on_validation_failure == LlmValidationPolicy::FallbackToGeometric) {
      return resolve_geometric(scene, directive, held_diameter, convention,
                               config.params);
    }
    throw PlacerError(PlacerError::Kind::ValidationFailed,
                      "placement reply rejected: " + why);
  };

  // First numeric triple in the reply, tolerant of brackets and commas.
  auto extract_triple = [](const std::string& body,
                           double (&nums)[3]) -> bool {
    int found = 0;
    for (std::size_t i = 0; i < body.size() && found < 3; ++i) {
      char c = body[i];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' ||
          c == '+' || c == '.') {
        char* end = nullptr;
        double v = std::strtod(body.c_str() + i, &end);
        if (end != body.c_str() + i) {
          nums[found++] = v;
          i = static_cast<std::size_t>(end - body.c_str()) - 1;
        }
      }
    }
    return found == 3;
  };

  ChatResponse response = ask(request);
  double nums[3];
  if (!extract_triple(response.content, nums)) {
    // One corrective re-ask before giving up on the reply format.
    ChatRequest retry = request;
    retry.messages.push_back({"assistant", response.content});
    retry.messages.push_back(
        {"user",
         "That reply did not contain a position. Respond with exactly three "
         "numbers: x, y, z."});
    response = ask(retry);
    if (!extract_triple(response.content, nums)) {
      if (config.on_validation_failure ==
          LlmValidationPolicy::FallbackToGeometric) {
        return fall_back("no numeric triple in reply");
      }
      throw PlacerError(PlacerError::Kind::UnparseableReply,
                        "placement reply contains no numeric triple: " +
                            response.content.substr(0, 120));
    }
  }

  Vec3 p(nums[0], nums[1], nums[2]);
  if (!p.allFinite()) return fall_back("non-finite position");
  if (!scene.table_bounds.contains(xy(p))) {
    return fall_back("position outside the table bounds");
  }
  if ((xy(p) - xy(group.centroid)).norm() > config.params.validation_radius) {
    return fall_back("position too far from the target");
  }
  std::set<std::string> exempt;
  for (const auto* m : group.members) exempt.insert(m->id);
  if (is_mounting(directive.specifier)) {
    for (const auto& e : scene.mount_component(directive.targets)) {
      exempt.insert(e);
    }
  }
  auto check = check_candidate(scene, xy(p), r_h, exempt, world);
  if (!check.ok) return fall_back(check.why);
  return p;
}

OffsetStats offset_stats(const std::vector<OffsetSample>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("offset_stats needs at least one sample");
  }

  OffsetStats stats;
  // Mean offset per specifier.
  for (const auto& s : samples) {
    auto& row = stats.rows[s.specifier];
    row.mean_delta += s.placed - s.target_centroid;
    row.samples += 1;
  }
  for (auto& [spec, row] : stats.rows) {
    row.mean_delta /= static_cast<double>(row.samples);
  }

  // Spread per specifier: group samples by scene, take the per-axis
  // population variance of the placed positions, average the three axes,
  // then average across scenes.
  std::map<SpatialSpecifier, std::map<std::string, std::vector<Vec3>>> groups;
  for (const auto& s : samples) {
    groups[s.specifier][s.scene_id].push_back(s.placed);
  }
  for (auto& [spec, by_scene] : groups) {
    double total = 0.0;
    for (const auto& [scene_id, positions] : by_scene) {
      // Identical samples have zero spread by definition; skip the arithmetic
      // so accumulated rounding cannot manufacture a tiny nonzero variance.
      bool identical = std::all_of(
          positions.begin(), positions.end(),
          [&](const Vec3& p) { return p == positions.front(); });
      if (identical) continue;
      Vec3 mean = Vec3::Zero();
      for (const auto& p : positions) mean += p;
      mean /= static_cast<double>(positions.size());
      Vec3 var = Vec3::Zero();
      for (const auto& p : positions) {
        Vec3 d = p - mean;
        var += d.cwiseProduct(d);
      }
      var /= static_cast<double>(positions.size());
      total += (var.x() + var.y() + var.z()) / 3.0;
    }
    stats.rows[spec].avg_variance = total / static_cast<double>(by_scene.size());
  }
  return stats;
}

}  // namespace tabletop
