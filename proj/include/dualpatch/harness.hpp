#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpatch/dataset.hpp"
#include "dualpatch/detect.hpp"
#include "dualpatch/render.hpp"

namespace dualpatch {

struct MatchConfig {
  double iou_min = 0.5;
  double score_min = 0.5;
};

// Greedy assignment: detections are visited by descending score (ties by
// index); each qualifying detection claims the unmatched person with the
// highest IoU >= iou_min (ties by person index). Returns one flag per person.
std::vector<bool> match_persons(std::span<const Rect> persons, const DetectionSet& detections,
                                const MatchConfig& config = {});

bool match_person(const Rect& person, const DetectionSet& detections,
                  const MatchConfig& config = {});

// (n_clean - n_patch) / n_clean; negative values are reported, not clamped.
double asr(long n_clean, long n_patch);

struct ModalityResult {
  std::string detector;
  long n_persons = 0;
  long n_clean = 0;
  long n_patch = 0;
  double asr = 0.0;

  bool operator==(const ModalityResult&) const = default;
};

struct FrameRow {
  std::string frame_id;
  long persons = 0;
  std::optional<long> visible_clean;
  std::optional<long> visible_patch;
  std::optional<long> infrared_clean;
  std::optional<long> infrared_patch;
  std::string status = "ok";

  bool operator==(const FrameRow&) const = default;
};

struct EvalReport {
  std::map<std::string, ModalityResult> modalities;  // keyed "visible"/"infrared"
  std::vector<FrameRow> frames;
  std::string config_hash;
  std::string patch_ref;

  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  PlacementConfig placement;
  ThermalParams thermal;
  EotRanges eot;
  MatchConfig match;
  std::uint64_t eot_seed = 0;
  bool keep_going = false;
  int workers = 1;
  std::string config_hash;
  std::string patch_ref;
};

struct DetectorPair {
  DetectorAdapter* visible = nullptr;
  DetectorAdapter* infrared = nullptr;
};

// Renders the patch onto every person (infrared through its shape, visible
// through shape + texture under one EOT draw per person) and counts matched
// persons on clean and patched frames. Modalities absent from every frame
// are omitted from the report.
EvalReport evaluate_patch(const PatchSpec& patch, const DatasetStore& store,
                          const DetectorPair& detectors, const EvalOptions& options);

// Patched frames exactly as evaluate_patch sees them, one EOT draw per person
// from the frame's stream.
ImagePlane render_patched_visible(const DualFrame& frame, std::size_t frame_index,
                                  const PatchSpec& patch, const EvalOptions& options);
ImagePlane render_patched_infrared(const DualFrame& frame, const PatchSpec& patch,
                                   const EvalOptions& options);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);
EvalReport load_report(const std::filesystem::path& path);

enum class ReportFormat { Json, Csv, Png };

// report.json (key-sorted), report.csv (one row per frame), asr_bars.png.
std::vector<std::filesystem::path> emit_report(const EvalReport& report,
                                               const std::filesystem::path& out_dir,
                                               std::span<const ReportFormat> formats);

std::string report_csv(const EvalReport& report);

}  // namespace dualpatch
