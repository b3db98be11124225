#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dualpatch/geometry.hpp"
#include "dualpatch/image.hpp"
#include "dualpatch/rng.hpp"

namespace dualpatch {

inline constexpr double kMaxAreaFraction = 0.30;

// Where a patch sits on a person: centroid horizontally centered on the box,
// vertically at `vertical_center` of the box height.
struct PlacementConfig {
  double area_fraction = 0.30;
  double vertical_center = 0.25;

  void validate() const;
};

struct Placement {
  double target_area = 0.0;  // px^2
  Rect anchor;               // square of side sqrt(target_area), unclipped
  Rect clipped;              // anchor intersected with the image
};

// Errors on a degenerate box or an area fraction outside (0, 0.30].
Placement placement_rect(const Rect& person_box, const PlacementConfig& config,
                         int image_width, int image_height);

struct PatchSpec {
  PolygonShape shape;
  TextureGrid texture;
  double area_fraction = 0.30;

  void validate() const;
};

struct Interval {
  double min = 0.0;
  double max = 0.0;
};

// Sampling ranges for the expectation-over-transformation renderer.
struct EotRanges {
  Interval rotation{-20.0 * kPi / 180.0, 20.0 * kPi / 180.0};  // radians
  Interval scale{0.9, 1.1};
  Interval brightness{-0.1, 0.1};
  Interval blur_sigma{0.0, 1.5};  // pixels

  static EotRanges identity();
  void validate() const;
};

struct EotTransform {
  double rotation = 0.0;  // radians, clockwise on screen
  double scale = 1.0;
  double brightness = 0.0;
  double blur_sigma = 0.0;

  bool is_identity() const {
    return rotation == 0.0 && scale == 1.0 && brightness == 0.0 && blur_sigma == 0.0;
  }
  bool operator==(const EotTransform&) const = default;
};

EotTransform sample_eot(Rng& rng, const EotRanges& ranges);

// Texture after the EOT transform. `rgb` is premultiplied by `alpha`;
// alpha < 1 where rotation/scaling pulled in samples from outside the grid.
struct WarpedTexture {
  TextureGrid rgb;
  std::vector<double> alpha;
};

// Differentiable texture warp: scale -> rotate (bilinear about the center,
// transparent outside) -> additive brightness -> Gaussian blur -> clamp.
// Every stage is linear or piecewise linear in the texel values, so
// backward() is the exact adjoint of the last forward() call.
class TextureWarp {
 public:
  TextureWarp(int texture_width, int texture_height, const EotTransform& transform);

  WarpedTexture forward(const TextureGrid& texture);

  // Accumulates d(loss)/d(texture) into grad_texture given d(loss)/d(rgb).
  void backward(std::span<const double> grad_rgb, std::span<double> grad_texture) const;

  const EotTransform& transform() const { return transform_; }

 private:
  void blur(std::vector<double>& plane, int stride) const;

  int width_;
  int height_;
  EotTransform transform_;
  std::vector<std::size_t> tap_offsets_;
  std::vector<std::uint32_t> tap_sources_;
  std::vector<double> tap_weights_;
  std::vector<double> kernel_;
  std::vector<double> alpha_;
  std::vector<std::uint8_t> pass_;  // clamp derivative per rgb value
};

WarpedTexture apply_transform(const TextureGrid& texture, const EotTransform& transform);

// One patch footprint in one frame: the rasterized mask pixels and, per
// pixel, the area-weighted texels of the warped texture it samples.
class PatchLayer {
 public:
  PatchLayer(const PolygonShape& shape, const Rect& anchor, int frame_width,
             int frame_height, int texture_width, int texture_height);

  const BitMask& mask() const { return mask_; }
  std::size_t pixel_count() const { return pixels_.size(); }

  // Composites in place; out = rgb_sampled + (1 - alpha_sampled) * frame.
  void composite(ImagePlane& frame, const WarpedTexture& warped) const;

  // grad_frame holds d(loss)/d(output) and is rewritten to d(loss)/d(input);
  // d(loss)/d(warped rgb) is accumulated into grad_rgb.
  void backward(ImagePlane& grad_frame, const WarpedTexture& warped,
                std::span<double> grad_rgb) const;

 private:
  BitMask mask_;
  int texture_width_;
  std::vector<std::uint32_t> pixels_;  // y * width + x
  std::vector<std::size_t> tap_offsets_;
  std::vector<std::uint32_t> tap_sources_;
  std::vector<double> tap_weights_;
};

enum class ThermalMode { Fixed, Additive };

// Infrared rendering of the heated patch region.
struct ThermalParams {
  ThermalMode mode = ThermalMode::Fixed;
  double v_hot = 0.9;
  double delta_hot = 0.5;

  void validate() const;
};

// Pastes the transformed texture inside the rasterized shape at the
// person's placement. Pixels outside the mask are untouched.
ImagePlane apply_visible(const ImagePlane& frame, const PatchSpec& patch,
                         const Rect& person_box, const EotTransform& transform,
                         const PlacementConfig& placement = {});

// Sets the masked region hot (fixed) or adds delta_hot (additive), clamped.
ImagePlane apply_infrared(const ImagePlane& frame, const PolygonShape& shape,
                          const Rect& person_box, const PlacementConfig& placement,
                          const ThermalParams& thermal = {});

// In-place variant used by batch loops.
void paint_infrared(ImagePlane& frame, const BitMask& mask, const ThermalParams& thermal);

}  // namespace dualpatch
