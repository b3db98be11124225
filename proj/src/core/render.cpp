#include "dualpatch/render.hpp"

#include <algorithm>
#include <cmath>

#include "dualpatch/error.hpp"

namespace dualpatch {

void PlacementConfig::validate() const {
  if (!(area_fraction > 0.0 && area_fraction <= kMaxAreaFraction)) {
    throw Error(ErrorKind::InvalidArgument, "area_fraction must lie in (0, 0.30]");
  }
  if (!(vertical_center >= 0.0 && vertical_center <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "vertical_center must lie in [0, 1]");
  }
}

Placement placement_rect(const Rect& person_box, const PlacementConfig& config, int image_width,
                         int image_height) {
  if (!(person_box.w > 0.0) || !(person_box.h > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "placement_rect: degenerate person box");
  }
  config.validate();
  Placement p;
  p.target_area = config.area_fraction * person_box.w * person_box.h;
  const double side = std::sqrt(p.target_area);
  const double cx = person_box.x + 0.5 * person_box.w;
  const double cy = person_box.y + config.vertical_center * person_box.h;
  p.anchor = {cx - 0.5 * side, cy - 0.5 * side, side, side};
  const bool inside = p.anchor.x >= 0.0 && p.anchor.y >= 0.0 &&
                      p.anchor.x + side <= image_width && p.anchor.y + side <= image_height;
  p.clipped = inside ? p.anchor
                     : intersect(p.anchor, {0.0, 0.0, static_cast<double>(image_width),
                                            static_cast<double>(image_height)});
  return p;
}

void PatchSpec::validate() const {
  if (!(area_fraction > 0.0 && area_fraction <= kMaxAreaFraction)) {
    throw Error(ErrorKind::InvalidArgument, "patch area_fraction must lie in (0, 0.30]");
  }
  if (texture.width() <= 0 || texture.height() <= 0) {
    throw Error(ErrorKind::InvalidArgument, "patch texture is empty");
  }
}

EotRanges EotRanges::identity() {
  EotRanges r;
  r.rotation = {0.0, 0.0};
  r.scale = {1.0, 1.0};
  r.brightness = {0.0, 0.0};
  r.blur_sigma = {0.0, 0.0};
  return r;
}

void EotRanges::validate() const {
  auto check = [](const Interval& i, const char* name) {
    if (!std::isfinite(i.min) || !std::isfinite(i.max) || i.min > i.max) {
      throw Error(ErrorKind::InvalidArgument,
                  std::string("EOT range ") + name + ": min must not exceed max");
    }
  };
  check(rotation, "rotation");
  check(scale, "scale");
  check(brightness, "brightness");
  check(blur_sigma, "blur_sigma");
  if (!(scale.min > 0.0)) throw Error(ErrorKind::InvalidArgument, "EOT scale must be > 0");
  if (blur_sigma.min < 0.0) throw Error(ErrorKind::InvalidArgument, "EOT blur sigma must be >= 0");
}

EotTransform sample_eot(Rng& rng, const EotRanges& ranges) {
  ranges.validate();
  EotTransform t;
  t.rotation = rng.uniform(ranges.rotation.min, ranges.rotation.max);
  t.scale = rng.uniform(ranges.scale.min, ranges.scale.max);
  t.brightness = rng.uniform(ranges.brightness.min, ranges.brightness.max);
  t.blur_sigma = rng.uniform(ranges.blur_sigma.min, ranges.blur_sigma.max);
  return t;
}

TextureWarp::TextureWarp(int texture_width, int texture_height, const EotTransform& transform)
    : width_(texture_width), height_(texture_height), transform_(transform) {
  if (width_ <= 0 || height_ <= 0) {
    throw Error(ErrorKind::InvalidArgument, "TextureWarp: empty texture");
  }
  if (!(transform.scale > 0.0) || !(transform.blur_sigma >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "TextureWarp: invalid transform");
  }
  const std::size_t n = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  tap_offsets_.reserve(n + 1);
  tap_offsets_.push_back(0);

  if (transform.rotation == 0.0 && transform.scale == 1.0) {
    for (std::size_t p = 0; p < n; ++p) {
      tap_sources_.push_back(static_cast<std::uint32_t>(p));
      tap_weights_.push_back(1.0);
      tap_offsets_.push_back(tap_sources_.size());
    }
  } else {
    // Inverse map: src = c + R(-theta) (dst - c) / s, bilinear over texel centers.
    const double cx = 0.5 * width_;
    const double cy = 0.5 * height_;
    const double cs = std::cos(transform.rotation);
    const double sn = std::sin(transform.rotation);
    const double inv = 1.0 / transform.scale;
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        const double sx = cx + (cs * dx + sn * dy) * inv - 0.5;
        const double sy = cy + (-sn * dx + cs * dy) * inv - 0.5;
        const double fx = std::floor(sx);
        const double fy = std::floor(sy);
        const double tx = sx - fx;
        const double ty = sy - fy;
        const double wts[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
        const double xs[4] = {fx, fx + 1, fx, fx + 1};
        const double ys[4] = {fy, fy, fy + 1, fy + 1};
        for (int k = 0; k < 4; ++k) {
          if (wts[k] == 0.0) continue;
          if (xs[k] < 0 || ys[k] < 0 || xs[k] >= width_ || ys[k] >= height_) continue;
          tap_sources_.push_back(static_cast<std::uint32_t>(static_cast<std::size_t>(ys[k]) * width_ +
                                                            static_cast<std::size_t>(xs[k])));
          tap_weights_.push_back(wts[k]);
        }
        tap_offsets_.push_back(tap_sources_.size());
      }
    }
  }

  if (transform.blur_sigma > 0.0) {
    const int radius = static_cast<int>(std::ceil(3.0 * transform.blur_sigma));
    kernel_.resize(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const double w = std::exp(-0.5 * i * i / (transform.blur_sigma * transform.blur_sigma));
      kernel_[static_cast<std::size_t>(i + radius)] = w;
      sum += w;
    }
    for (double& w : kernel_) w /= sum;
  }

  alpha_.assign(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    double a = 0.0;
    for (std::size_t t = tap_offsets_[p]; t < tap_offsets_[p + 1]; ++t) a += tap_weights_[t];
    alpha_[p] = a;
  }
  blur(alpha_, 1);
}

void TextureWarp::blur(std::vector<double>& plane, int stride) const {
  if (kernel_.empty()) return;
  const int radius = static_cast<int>(kernel_.size() / 2);
  std::vector<double> tmp(plane.size(), 0.0);
  auto idx = [&](int x, int y, int c) {
    return (static_cast<std::size_t>(y) * width_ + static_cast<std::size_t>(x)) * stride +
           static_cast<std::size_t>(c);
  };
  // Zero-padded separable pass; the operator is symmetric and is its own adjoint.
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      for (int c = 0; c < stride; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = x + k;
          if (xx < 0 || xx >= width_) continue;
          acc += kernel_[static_cast<std::size_t>(k + radius)] * plane[idx(xx, y, c)];
        }
        tmp[idx(x, y, c)] = acc;
      }
    }
  }
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      for (int c = 0; c < stride; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = y + k;
          if (yy < 0 || yy >= height_) continue;
          acc += kernel_[static_cast<std::size_t>(k + radius)] * tmp[idx(x, yy, c)];
        }
        plane[idx(x, y, c)] = acc;
      }
    }
  }
}

WarpedTexture TextureWarp::forward(const TextureGrid& texture) {
  if (texture.width() != width_ || texture.height() != height_) {
    throw Error(ErrorKind::InvalidArgument, "TextureWarp: texture size mismatch");
  }
  const std::size_t n = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  const auto src = texture.values();

  std::vector<double> rgb(n * 3, 0.0);
  std::vector<double> coverage(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    double r = 0.0, g = 0.0, b = 0.0, a = 0.0;
    for (std::size_t t = tap_offsets_[p]; t < tap_offsets_[p + 1]; ++t) {
      const double w = tap_weights_[t];
      const std::size_t s = static_cast<std::size_t>(tap_sources_[t]) * 3;
      r += w * src[s];
      g += w * src[s + 1];
      b += w * src[s + 2];
      a += w;
    }
    rgb[p * 3] = r + transform_.brightness * a;
    rgb[p * 3 + 1] = g + transform_.brightness * a;
    rgb[p * 3 + 2] = b + transform_.brightness * a;
  }
  blur(rgb, 3);

  pass_.assign(n * 3, 1);
  WarpedTexture out{TextureGrid(width_, height_), alpha_};
  auto dst = out.rgb.values();
  for (std::size_t p = 0; p < n; ++p) {
    const double hi = alpha_[p];
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = rgb[p * 3 + c];
      if (v < 0.0) {
        dst[p * 3 + c] = 0.0;
        pass_[p * 3 + c] = 0;
      } else if (v > hi) {
        dst[p * 3 + c] = hi;
        pass_[p * 3 + c] = 0;
      } else {
        dst[p * 3 + c] = v;
      }
    }
  }
  return out;
}

void TextureWarp::backward(std::span<const double> grad_rgb, std::span<double> grad_texture) const {
  const std::size_t n = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  if (grad_rgb.size() != n * 3 || grad_texture.size() != n * 3 || pass_.size() != n * 3) {
    throw Error(ErrorKind::InvalidArgument, "TextureWarp::backward: size mismatch");
  }
  std::vector<double> g(n * 3);
  for (std::size_t i = 0; i < n * 3; ++i) g[i] = pass_[i] ? grad_rgb[i] : 0.0;
  blur(g, 3);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t t = tap_offsets_[p]; t < tap_offsets_[p + 1]; ++t) {
      const double w = tap_weights_[t];
      const std::size_t s = static_cast<std::size_t>(tap_sources_[t]) * 3;
      grad_texture[s] += w * g[p * 3];
      grad_texture[s + 1] += w * g[p * 3 + 1];
      grad_texture[s + 2] += w * g[p * 3 + 2];
    }
  }
}

WarpedTexture apply_transform(const TextureGrid& texture, const EotTransform& transform) {
  TextureWarp warp(texture.width(), texture.height(), transform);
  return warp.forward(texture);
}

namespace {

// Rounds values within 1e-9 of an integer onto that integer.
double snap(double t) {
  const double r = std::round(t);
  return std::abs(t - r) < 1e-9 ? r : t;
}

}  // namespace

PatchLayer::PatchLayer(const PolygonShape& shape, const Rect& anchor, int frame_width,
                       int frame_height, int texture_width, int texture_height)
    : mask_(rasterize(shape, anchor, frame_width, frame_height)), texture_width_(texture_width) {
  if (texture_width <= 0 || texture_height <= 0) {
    throw Error(ErrorKind::InvalidArgument, "PatchLayer: empty texture");
  }
  // The texture spans the shape's bounding box in the unit frame; each pixel
  // averages the texels under its footprint, clipped to the texture.
  const Bounds b = bounding_box(shape);
  const Point c = anchor.center();
  const double tw = static_cast<double>(texture_width);
  const double th = static_cast<double>(texture_height);
  const double su = tw / (anchor.w * b.width());
  const double sv = th / (anchor.h * b.height());
  tap_offsets_.push_back(0);
  for (int y = 0; y < frame_height; ++y) {
    for (int x = 0; x < frame_width; ++x) {
      if (!mask_.get(x, y)) continue;
      const double u = ((x + 0.5 - c.x) / anchor.w - b.min_x) * (tw / b.width());
      const double v = ((y + 0.5 - c.y) / anchor.h - b.min_y) * (th / b.height());
      const double u0 = std::max(0.0, snap(u - 0.5 * su)), u1 = std::min(tw, snap(u + 0.5 * su));
      const double v0 = std::max(0.0, snap(v - 0.5 * sv)), v1 = std::min(th, snap(v + 0.5 * sv));
      const std::size_t first = tap_sources_.size();
      double total = 0.0;
      if (u1 > u0 && v1 > v0) {
        const int i0 = static_cast<int>(std::floor(u0));
        const int i1 = std::min(texture_width, static_cast<int>(std::ceil(u1)));
        const int j0 = static_cast<int>(std::floor(v0));
        const int j1 = std::min(texture_height, static_cast<int>(std::ceil(v1)));
        for (int j = j0; j < j1; ++j) {
          const double oy = std::min<double>(j + 1, v1) - std::max<double>(j, v0);
          if (oy <= 0.0) continue;
          for (int i = i0; i < i1; ++i) {
            const double ox = std::min<double>(i + 1, u1) - std::max<double>(i, u0);
            if (ox <= 0.0) continue;
            tap_sources_.push_back(static_cast<std::uint32_t>(j * texture_width + i));
            tap_weights_.push_back(ox * oy);
            total += ox * oy;
          }
        }
      } else {
        // Degenerate footprint: nearest texel.
        const int i = std::clamp(static_cast<int>(std::floor(u)), 0, texture_width - 1);
        const int j = std::clamp(static_cast<int>(std::floor(v)), 0, texture_height - 1);
        tap_sources_.push_back(static_cast<std::uint32_t>(j * texture_width + i));
        tap_weights_.push_back(1.0);
        total = 1.0;
      }
      for (std::size_t t = first; t < tap_weights_.size(); ++t) tap_weights_[t] /= total;
      pixels_.push_back(static_cast<std::uint32_t>(y * frame_width + x));
      tap_offsets_.push_back(tap_sources_.size());
    }
  }
}

void PatchLayer::composite(ImagePlane& frame, const WarpedTexture& warped) const {
  if (frame.modality() != Modality::Visible) {
    throw Error(ErrorKind::InvalidArgument, "composite: visible frame required");
  }
  if (frame.width() != mask_.width() || frame.height() != mask_.height()) {
    throw Error(ErrorKind::InvalidArgument, "composite: frame size mismatch");
  }
  if (warped.rgb.width() != texture_width_) {
    throw Error(ErrorKind::InvalidArgument, "composite: texture size mismatch");
  }
  const auto rgb = warped.rgb.values();
  auto out = frame.values();
  for (std::size_t k = 0; k < pixels_.size(); ++k) {
    double r = 0.0, g = 0.0, b = 0.0, a = 0.0;
    for (std::size_t t = tap_offsets_[k]; t < tap_offsets_[k + 1]; ++t) {
      const double w = tap_weights_[t];
      const std::size_t s = tap_sources_[t];
      r += w * rgb[s * 3];
      g += w * rgb[s * 3 + 1];
      b += w * rgb[s * 3 + 2];
      a += w * warped.alpha[s];
    }
    const std::size_t p = static_cast<std::size_t>(pixels_[k]) * 3;
    const double keep = 1.0 - a;
    out[p] = std::clamp(r + keep * out[p], 0.0, 1.0);
    out[p + 1] = std::clamp(g + keep * out[p + 1], 0.0, 1.0);
    out[p + 2] = std::clamp(b + keep * out[p + 2], 0.0, 1.0);
  }
}

void PatchLayer::backward(ImagePlane& grad_frame, const WarpedTexture& warped,
                          std::span<double> grad_rgb) const {
  auto g = grad_frame.values();
  for (std::size_t k = 0; k < pixels_.size(); ++k) {
    const std::size_t p = static_cast<std::size_t>(pixels_[k]) * 3;
    double a = 0.0;
    for (std::size_t t = tap_offsets_[k]; t < tap_offsets_[k + 1]; ++t) {
      const double w = tap_weights_[t];
      const std::size_t s = tap_sources_[t];
      a += w * warped.alpha[s];
      grad_rgb[s * 3] += w * g[p];
      grad_rgb[s * 3 + 1] += w * g[p + 1];
      grad_rgb[s * 3 + 2] += w * g[p + 2];
    }
    const double keep = 1.0 - a;
    g[p] *= keep;
    g[p + 1] *= keep;
    g[p + 2] *= keep;
  }
}

void ThermalParams::validate() const {
  if (!(v_hot >= 0.0 && v_hot <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "thermal v_hot must lie in [0, 1]");
  }
  if (!std::isfinite(delta_hot)) {
    throw Error(ErrorKind::InvalidArgument, "thermal delta_hot must be finite");
  }
}

ImagePlane apply_visible(const ImagePlane& frame, const PatchSpec& patch, const Rect& person_box,
                         const EotTransform& transform, const PlacementConfig& placement) {
  if (frame.modality() != Modality::Visible) {
    throw Error(ErrorKind::InvalidArgument, "apply_visible: frame is not visible modality");
  }
  patch.validate();
  PlacementConfig cfg = placement;
  cfg.area_fraction = patch.area_fraction;
  const Placement where = placement_rect(person_box, cfg, frame.width(), frame.height());
  const PatchLayer layer(patch.shape, where.anchor, frame.width(), frame.height(),
                         patch.texture.width(), patch.texture.height());
  const WarpedTexture warped = apply_transform(patch.texture, transform);
  ImagePlane out = frame;
  layer.composite(out, warped);
  return out;
}

void paint_infrared(ImagePlane& frame, const BitMask& mask, const ThermalParams& thermal) {
  if (frame.modality() != Modality::Infrared) {
    throw Error(ErrorKind::InvalidArgument, "paint_infrared: frame is not infrared modality");
  }
  thermal.validate();
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!mask.get(x, y)) continue;
      double& v = frame.at(x, y);
      v = thermal.mode == ThermalMode::Fixed ? thermal.v_hot
                                             : std::clamp(v + thermal.delta_hot, 0.0, 1.0);
    }
  }
}

ImagePlane apply_infrared(const ImagePlane& frame, const PolygonShape& shape,
                          const Rect& person_box, const PlacementConfig& placement,
                          const ThermalParams& thermal) {
  if (frame.modality() != Modality::Infrared) {
    throw Error(ErrorKind::InvalidArgument, "apply_infrared: frame is not infrared modality");
  }
  thermal.validate();
  const Placement where = placement_rect(person_box, placement, frame.width(), frame.height());
  ImagePlane out = frame;
  paint_infrared(out, rasterize(shape, where.anchor, frame.width(), frame.height()), thermal);
  return out;
}

}  // namespace dualpatch
