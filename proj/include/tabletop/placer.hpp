#pragma once

#include <tabletop/geometry.hpp>
#include <tabletop/llm.hpp>
#include <tabletop/react.hpp>
#include <tabletop/scene.hpp>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabletop {

class PlacerError : public std::runtime_error {
 public:
  enum class Kind {
    UnknownSpecifier,
    UnknownTarget,
    TargetMissing,
    NoValidPlacement,
    BackendUnavailable,
    UnparseableReply,
    ValidationFailed,
  };

  PlacerError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind(kind) {}

  Kind kind;
};

// Maps object ids (or id prefixes, e.g. "011_banana" or "011") to category
// nouns so phrases like "the fruits" resolve to concrete ids.
class CategoryMap {
 public:
  static CategoryMap from_json(const std::string& text);
  static CategoryMap load_file(const std::string& path);

  std::vector<std::string> categories_of(const std::string& id) const;
  // Placed objects in scene order whose category list contains `category`.
  std::vector<std::string> members(const Scene& scene,
                                   const std::string& category) const;
  bool has_category(const std::string& category) const;

 private:
  std::map<std::string, std::vector<std::string>> by_prefix_;
  std::vector<std::string> known_categories_;
};

struct PlacementDirective {
  SpatialSpecifier specifier = SpatialSpecifier::NextTo;
  std::vector<std::string> targets;  // resolved placed-object ids, scene order
  std::string raw_phrase;

  bool operator==(const PlacementDirective& other) const {
    return specifier == other.specifier && targets == other.targets &&
           raw_phrase == other.raw_phrase;
  }
};

// Parses a phrase like "to the left of the 029_plate" or "near the fruits".
// The longest matching relation surface form wins (earliest on ties); the
// trailing noun resolves against exact ids, then id name tokens, then
// categories. Throws PlacerError{UnknownSpecifier|UnknownTarget}.
PlacementDirective parse_directive(const std::string& phrase,
                                   const Scene& scene,
                                   const CategoryMap& categories);

// Deterministic geometric resolution to a 3D position for the held sphere.
// Directional placements sit at the first clear distance along the convention
// axis; next_to/near rotate through the convention scan order; on_top/inside
// sit at the target centroid (with a small in-footprint nudge scan when the
// target is wider than the held object). Throws
// PlacerError{TargetMissing|NoValidPlacement}.
Vec3 resolve_geometric(const Scene& scene, const PlacementDirective& directive,
                       double held_diameter, const AxisConvention& convention,
                       const PlacerParams& params = {});

enum class LlmValidationPolicy { FallbackToGeometric, Error };

struct SubPromptConfig {
  PromptTemplate prompt;  // placer few-shot template
  LlmValidationPolicy on_validation_failure =
      LlmValidationPolicy::FallbackToGeometric;
  PlacerParams params;
};

// Asks the backend for a position via a self-contained sub-prompt (the main
// agent transcript never sees this exchange), parses the first numeric triple
// from the reply, and validates it: finite, inside table bounds, within
// params.validation_radius of the target centroid, and collision-free.
// Invalid replies either fall back to resolve_geometric or throw
// PlacerError{ValidationFailed}, per policy. Backend transport failures throw
// PlacerError{BackendUnavailable}; replies with no numeric triple throw
// PlacerError{UnparseableReply} (also subject to fallback).
Vec3 resolve_llm(const Scene& scene, const PlacementDirective& directive,
                 double held_diameter, ChatBackend& backend,
                 const AxisConvention& convention, const SubPromptConfig& config);

// One observed placement next to its target group.
struct OffsetSample {
  SpatialSpecifier specifier = SpatialSpecifier::NextTo;
  std::string scene_id;  // grouping key for the variance statistic
  Vec3 placed = Vec3::Zero();
  Vec3 target_centroid = Vec3::Zero();
};

struct OffsetRow {
  Vec3 mean_delta = Vec3::Zero();  // mean of (placed - target_centroid)
  double avg_variance = 0.0;       // mean over scenes of per-axis position variance
  int samples = 0;
};

struct OffsetStats {
  std::map<SpatialSpecifier, OffsetRow> rows;
};

// Throws std::invalid_argument on an empty sample set.
OffsetStats offset_stats(const std::vector<OffsetSample>& samples);

}  // namespace tabletop
