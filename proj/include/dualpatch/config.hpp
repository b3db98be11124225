#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpatch/detect.hpp"
#include "dualpatch/harness.hpp"
#include "dualpatch/shape_search.hpp"
#include "dualpatch/texture_opt.hpp"

namespace dualpatch {

struct DetectorSpec {
  std::string type;  // mock_coverage | smooth_color | subprocess
  CoverageParams coverage;
  SmoothColorParams smooth;
  SubprocessConfig subprocess;
};

enum class TexturePolicy { PerShape, BestOnly };

struct EvalConfig {
  MatchConfig match;
  EotRanges eot;
  bool apply_eot = true;
};

struct OutputConfig {
  std::string dir = "runs/default";
  std::vector<ReportFormat> formats{ReportFormat::Json, ReportFormat::Csv, ReportFormat::Png};
};

// The single JSON document driving a run. Parsing is strict: unknown keys
// and out-of-range values raise Error(Config) naming the offending key.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string manifest;
  std::optional<DetectorSpec> visible_detector;
  std::optional<DetectorSpec> infrared_detector;
  SearchConfig shape_search;
  TextureOptConfig texture_opt;
  TexturePolicy texture_policy = TexturePolicy::PerShape;
  EvalConfig eval;
  OutputConfig output;

  std::filesystem::path manifest_path() const;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved config with every default filled in, key-sorted.
nlohmann::json resolved_config(const RunConfig& config);

// SHA-256 of the resolved config without output.dir: stable across key
// order and independent of where artifacts are written.
std::string config_hash(const RunConfig& config);

std::unique_ptr<DetectorAdapter> make_detector(const DetectorSpec& spec, Modality modality);

// Stage seeds derived from the global seed.
enum class SeedStream : std::uint64_t { ShapeSearch = 1, Texture = 2, Eval = 3 };
std::uint64_t stage_seed(const RunConfig& config, SeedStream stream, std::uint64_t index = 0);

// Replaces the global seed and re-derives the stage seeds.
void override_seed(RunConfig& config, std::uint64_t seed);

}  // namespace dualpatch
