#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace dualpatch {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned rectangle in pixels, origin top-left.
struct Rect {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  Point center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool operator==(const Rect&) const = default;
};

double rect_iou(const Rect& a, const Rect& b);
Rect intersect(const Rect& a, const Rect& b);

struct PolarVertex {
  double radius = 0.0;
  double angle = 0.0;  // radians in [0, 2*pi)

  bool operator==(const PolarVertex&) const = default;
};

inline constexpr std::size_t kMinVertices = 3;
inline constexpr std::size_t kDefaultMaxVertices = 16;
inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.141592653589793238462643383279;

// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validate(std::span<const PolarVertex> vertices,
                                  std::size_t max_vertices = kDefaultMaxVertices);

// Star-shaped polygon about the origin: angles strictly increasing in
// [0, 2*pi), every angular gap (including the wrap-around gap) below pi and
// all radii positive. Instances are always valid.
class PolygonShape {
 public:
  // Throws Error(InvalidArgument) listing every violation.
  explicit PolygonShape(std::vector<PolarVertex> vertices,
                        std::size_t max_vertices = kDefaultMaxVertices);

  // Regular K-gon with a flat top edge (first vertex at pi/K), scaled to `area`.
  static PolygonShape regular(std::size_t k, double area = 1.0);

  std::span<const PolarVertex> vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  const PolarVertex& operator[](std::size_t i) const { return vertices_[i]; }

  bool operator==(const PolygonShape&) const = default;

 private:
  std::vector<PolarVertex> vertices_;
};

// vertex_i = center + scale * radius_i * (cos angle_i, sin angle_i)
std::vector<Point> to_cartesian(const PolygonShape& shape, Point center, double scale);

// Maps the unit frame onto `anchor`: the origin goes to the anchor center and
// one normalized unit spans the anchor width (x) and height (y).
std::vector<Point> to_pixels(const PolygonShape& shape, const Rect& anchor);

// Shoelace area at scale 1.
double polygon_area(const PolygonShape& shape);

PolygonShape normalize_area(const PolygonShape& shape, double target_area);

struct Bounds {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

Bounds bounding_box(const PolygonShape& shape);

class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool get(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool value = true) { bits_[index(x, y)] = value ? 1 : 0; }

  std::size_t popcount() const;
  bool empty() const { return popcount() == 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  bool operator==(const BitMask&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Pixel (x, y) is set iff its center (x + 0.5, y + 0.5) lies inside the
// polygon placed by to_pixels(shape, placement), even-odd rule. Pixels
// outside the width x height raster are clipped away.
BitMask rasterize(const PolygonShape& shape, const Rect& placement, int width, int height);

// Raster spanning [0, ceil(x + w)) x [0, ceil(y + h)).
BitMask rasterize(const PolygonShape& shape, const Rect& placement);

// |a & b| / |a | b|, 1 when both are empty.
double mask_iou(const BitMask& a, const BitMask& b);

// {"vertices": [[radius, angle_rad], ...]}
nlohmann::json shape_to_json(const PolygonShape& shape);
PolygonShape shape_from_json(const nlohmann::json& doc,
                             std::size_t max_vertices = kDefaultMaxVertices);
void save_shape(const PolygonShape& shape, const std::filesystem::path& path);
PolygonShape load_shape(const std::filesystem::path& path,
                        std::size_t max_vertices = kDefaultMaxVertices);

}  // namespace dualpatch
