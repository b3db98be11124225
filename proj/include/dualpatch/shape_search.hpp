#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpatch/dataset.hpp"
#include "dualpatch/detect.hpp"
#include "dualpatch/geometry.hpp"
#include "dualpatch/harness.hpp"
#include "dualpatch/render.hpp"
#include "dualpatch/rng.hpp"

namespace dualpatch {

// Area of every candidate in the unit anchor frame. The person-relative
// budget is the placement's area fraction.
inline constexpr double kUnitPatchArea = 1.0;

struct SearchConfig {
  int generations = 30;
  int population = 16;
  int top_k = 3;
  double diversity_iou = 0.5;  // archive keeps pairwise mask IoU below this
  double sigma_radius = 0.15;
  double sigma_angle = 0.15;
  std::size_t min_vertices = 3;
  std::size_t max_vertices = 16;
  std::uint64_t seed = 0;
  PlacementConfig placement;
  ThermalParams thermal;
  MatchConfig match;
  int workers = 1;

  void validate() const;
};

struct ShapeCandidate {
  PolygonShape shape;
  double asr = 0.0;
  int generation = 0;
  std::uint64_t lineage_id = 0;

  bool operator==(const ShapeCandidate&) const = default;
};

enum class MutationOp { Radius, Angle, Insert, Delete };

// Applies exactly one operator, chosen uniformly among those applicable to
// the vertex count, then renormalizes to kUnitPatchArea. `applied` reports
// which operator ran (fallbacks report Radius).
PolygonShape mutate(const PolygonShape& shape, Rng& rng, const SearchConfig& config,
                    MutationOp* applied = nullptr);

// Same, with the operator forced; used by tests and by the fallback path.
PolygonShape mutate_with(const PolygonShape& shape, MutationOp op, Rng& rng,
                         const SearchConfig& config, MutationOp* applied = nullptr);

// Person-level success rate: attacked persons / all persons across the
// infrared frames, a person being attacked when no detection with score
// >= score_min matches it.
double evaluate_shape(const PolygonShape& shape, std::span<const DualFrame> frames,
                      DetectorAdapter& detector, const SearchConfig& config);

// Greedy top-K by (asr desc, lineage asc) keeping pairwise canonical mask IoU < tau.
std::vector<ShapeCandidate> select_diverse(std::vector<ShapeCandidate> pool, int top_k,
                                           double diversity_iou);

// Canonical 64x64 raster used for the diversity measure.
BitMask canonical_mask(const PolygonShape& shape);

struct SearchResult {
  std::vector<ShapeCandidate> archive;      // sorted by asr descending
  std::vector<double> best_per_generation;  // best-so-far ASR
  std::size_t evaluations = 0;
  int resumed_from = -1;                    // generation restored from a checkpoint
};

struct SearchHooks {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::string config_hash;
  std::function<void(int generation, double best_asr)> on_generation;
};

// Elitist (mu + lambda) evolution. Generation 0 holds regular polygons with
// K in {4, 6, 8, 12} repeated up to the population size, later copies
// mutated. Each following generation breeds `population` children by binary
// tournament, and the best `population` of parents + children survive. With
// a checkpoint directory, every completed generation is written there and a
// matching checkpoint is resumed on the next call.
SearchResult search(std::span<const DualFrame> frames, DetectorAdapter& detector,
                    const SearchConfig& config, const SearchHooks& hooks = {});

nlohmann::json candidate_to_json(const ShapeCandidate& candidate);
ShapeCandidate candidate_from_json(const nlohmann::json& doc, std::size_t max_vertices);

}  // namespace dualpatch
