#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dualpatch/dataset.hpp"
#include "dualpatch/detect.hpp"
#include "dualpatch/geometry.hpp"
#include "dualpatch/image.hpp"
#include "dualpatch/render.hpp"

namespace dualpatch {

inline constexpr double kTvEpsilon = 1e-8;

// Mean over sites of sqrt(dx^2 + dy^2 + eps) per channel, averaged over
// channels; differences past the last row/column count as zero. Site terms
// are summed in sorted order.
double tv_loss(const TextureGrid& texture);

// Adds scale * d(tv_loss)/d(texture) into grad.
void tv_loss_gradient(const TextureGrid& texture, double scale, std::span<double> grad);

// Mean over persons of max(0, score - margin).
double ap_loss(std::span<const double> confidences, double margin = 0.0);

enum class TextureInit { Gray, Random };

struct TextureOptConfig {
  int steps = 200;
  double learning_rate = 0.03;
  double lambda_tv = 2.5;
  int eot_samples = 4;
  int texture_width = 128;
  int texture_height = 128;
  double margin = 0.0;
  TextureInit init = TextureInit::Gray;
  bool fixed_eot = false;
  int max_halvings = 5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  EotRanges eot;
  PlacementConfig placement;
  int workers = 1;

  void validate() const;
};

struct LossReport {
  int step = 0;
  double l_ap = 0.0;
  double l_tv = 0.0;
  double total = 0.0;
  double mean_confidence = 0.0;
  double learning_rate = 0.0;  // accepted rate after backtracking; 0 when rejected

  bool operator==(const LossReport&) const = default;
};

nlohmann::json loss_report_to_json(const LossReport& report);

// Loss over a fixed set of EOT draws: mean ap_loss over (draw, person) plus
// lambda_tv * tv_loss, with the exact gradient. Patch layers are built once
// for the fixed shape and placement.
class TextureObjective {
 public:
  TextureObjective(const PolygonShape& shape, std::span<const DualFrame> frames,
                   const DifferentiableDetector& detector, const TextureOptConfig& config);

  struct Value {
    double l_ap = 0.0;
    double l_tv = 0.0;
    double total = 0.0;
    double mean_confidence = 0.0;
    std::vector<double> confidences;  // per (draw, person), draw-major
  };

  Value evaluate(const TextureGrid& texture, std::span<const EotTransform> draws,
                 std::vector<double>* grad = nullptr) const;

  std::size_t person_count() const { return person_count_; }

 private:
  struct FrameLayers {
    const DualFrame* frame;
    std::vector<PatchLayer> layers;
  };

  const DifferentiableDetector& detector_;
  TextureOptConfig config_;
  std::vector<FrameLayers> frames_;
  std::size_t person_count_ = 0;
};

struct TextureResult {
  TextureGrid texture;
  std::vector<LossReport> history;
  std::vector<double> final_confidences;  // per person, identity transform
  double final_mean_confidence = 0.0;
  double final_tv = 0.0;
};

// Adam steps with backtracking: a step whose loss (on the same draws) rises
// is retried at half the rate up to max_halvings times and dropped if it
// still rises. Texture values are clamped to [0, 1] after every step.
TextureResult optimize_texture(const PolygonShape& shape, std::span<const DualFrame> frames,
                               const DetectorAdapter& detector, const TextureOptConfig& config,
                               const std::function<void(const LossReport&)>& on_step = {});

}  // namespace dualpatch
