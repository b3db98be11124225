#include "dualpatch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dualpatch/error.hpp"

namespace dualpatch {

double rect_iou(const Rect& a, const Rect& b) {
  const Rect inter = intersect(a, b);
  const double i = inter.area();
  const double u = a.area() + b.area() - i;
  return u > 0.0 ? i / u : 0.0;
}

Rect intersect(const Rect& a, const Rect& b) {
  const double x0 = std::max(a.x, b.x);
  const double y0 = std::max(a.y, b.y);
  const double x1 = std::min(a.x + a.w, b.x + b.w);
  const double y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0.0, 0.0};
  return {x0, y0, x1 - x0, y1 - y0};
}

std::vector<std::string> validate(std::span<const PolarVertex> vertices,
                                  std::size_t max_vertices) {
  std::vector<std::string> out;
  const std::size_t k = vertices.size();
  if (k < kMinVertices) out.emplace_back("K >= 3");
  if (k > max_vertices) {
    out.push_back("K <= K_max (" + std::to_string(max_vertices) + ")");
  }

  bool finite = true;
  bool radii_ok = true;
  bool range_ok = true;
  for (const auto& v : vertices) {
    if (!std::isfinite(v.radius) || !std::isfinite(v.angle)) finite = false;
    if (!(v.radius > 0.0)) radii_ok = false;
    if (!(v.angle >= 0.0 && v.angle < kTwoPi)) range_ok = false;
  }
  if (!finite) out.emplace_back("finite values");
  if (!radii_ok) out.emplace_back("radii > 0");
  if (!range_ok) out.emplace_back("angles in [0, 2pi)");

  bool increasing = true;
  bool gaps_ok = true;
  for (std::size_t i = 1; i < k; ++i) {
    const double gap = vertices[i].angle - vertices[i - 1].angle;
    if (!(gap > 0.0)) increasing = false;
    if (!(gap < kPi)) gaps_ok = false;
  }
  if (k >= 2) {
    const double wrap = kTwoPi - vertices[k - 1].angle + vertices[0].angle;
    if (!(wrap < kPi)) gaps_ok = false;
  }
  if (!increasing) out.emplace_back("angles strictly increasing");
  if (!gaps_ok) out.emplace_back("angle gaps < pi");

  if (k >= kMinVertices && finite) {
    double twice_area = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& a = vertices[i];
      const auto& b = vertices[(i + 1) % k];
      const double ax = a.radius * std::cos(a.angle), ay = a.radius * std::sin(a.angle);
      const double bx = b.radius * std::cos(b.angle), by = b.radius * std::sin(b.angle);
      twice_area += ax * by - bx * ay;
    }
    if (!(twice_area > 0.0)) out.emplace_back("area > 0");
  }
  return out;
}

PolygonShape::PolygonShape(std::vector<PolarVertex> vertices, std::size_t max_vertices)
    : vertices_(std::move(vertices)) {
  const auto violations = validate(vertices_, max_vertices);
  if (!violations.empty()) {
    std::string msg = "invalid polygon shape:";
    for (const auto& v : violations) msg += " [" + v + "]";
    throw Error(ErrorKind::InvalidArgument, msg);
  }
}

PolygonShape PolygonShape::regular(std::size_t k, double area) {
  std::vector<PolarVertex> v;
  v.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double angle = kPi / static_cast<double>(k) +
                         kTwoPi * static_cast<double>(i) / static_cast<double>(k);
    v.push_back({1.0, angle});
  }
  return normalize_area(PolygonShape(std::move(v), std::max(k, kDefaultMaxVertices)), area);
}

std::vector<Point> to_cartesian(const PolygonShape& shape, Point center, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "to_cartesian: scale must be > 0");
  std::vector<Point> out;
  out.reserve(shape.size());
  for (const auto& v : shape.vertices()) {
    out.push_back({center.x + scale * v.radius * std::cos(v.angle),
                   center.y + scale * v.radius * std::sin(v.angle)});
  }
  return out;
}

std::vector<Point> to_pixels(const PolygonShape& shape, const Rect& anchor) {
  const Point c = anchor.center();
  std::vector<Point> out;
  out.reserve(shape.size());
  for (const auto& v : shape.vertices()) {
    out.push_back({c.x + anchor.w * v.radius * std::cos(v.angle),
                   c.y + anchor.h * v.radius * std::sin(v.angle)});
  }
  return out;
}

double polygon_area(const PolygonShape& shape) {
  const auto pts = to_cartesian(shape, {0.0, 0.0}, 1.0);
  double twice = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point& a = pts[i];
    const Point& b = pts[(i + 1) % pts.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

PolygonShape normalize_area(const PolygonShape& shape, double target_area) {
  if (!(target_area > 0.0) || !std::isfinite(target_area)) {
    throw Error(ErrorKind::InvalidArgument, "normalize_area: target area must be > 0");
  }
  const double current = polygon_area(shape);
  if (current == target_area) return shape;
  const double factor = std::sqrt(target_area / current);
  std::vector<PolarVertex> v(shape.vertices().begin(), shape.vertices().end());
  for (auto& p : v) p.radius *= factor;
  return PolygonShape(std::move(v), std::max(shape.size(), kDefaultMaxVertices));
}

Bounds bounding_box(const PolygonShape& shape) {
  const auto pts = to_cartesian(shape, {0.0, 0.0}, 1.0);
  Bounds b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const auto& p : pts) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

BitMask::BitMask(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, "BitMask dimensions must be positive");
  }
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

std::size_t BitMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {

// First integer column whose center c + 0.5 satisfies c + 0.5 >= x.
long first_center_at_or_after(double x) {
  long c = static_cast<long>(std::ceil(x - 0.5));
  while (static_cast<double>(c - 1) + 0.5 >= x) --c;
  while (static_cast<double>(c) + 0.5 < x) ++c;
  return c;
}

}  // namespace

BitMask rasterize(const PolygonShape& shape, const Rect& placement, int width, int height) {
  if (!(placement.w > 0.0) || !(placement.h > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "rasterize: empty placement rect");
  }
  BitMask mask(width, height);
  const auto pts = to_pixels(shape, placement);
  double min_y = pts[0].y, max_y = pts[0].y;
  for (const auto& p : pts) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double row_lo = std::max(0.0, std::floor(min_y - 0.5));
  const double row_hi = std::min(static_cast<double>(height - 1), std::ceil(max_y));
  if (row_hi < row_lo) return mask;

  std::vector<double> crossings;
  crossings.reserve(pts.size());
  const std::size_t n = pts.size();
  for (int row = static_cast<int>(row_lo); row <= static_cast<int>(row_hi); ++row) {
    const double yc = static_cast<double>(row) + 0.5;
    crossings.clear();
    // Half-open edge rule: an edge counts when exactly one endpoint lies
    // strictly below the scanline.
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point& a = pts[i];
      const Point& b = pts[j];
      if ((a.y > yc) != (b.y > yc)) {
        crossings.push_back((b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x);
      }
    }
    std::sort(crossings.begin(), crossings.end());
    // A center x is inside iff an odd number of crossings lie strictly to its
    // right, i.e. x in [crossings[2k], crossings[2k+1]).
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const double lo = crossings[k];
      const double hi = crossings[k + 1];
      if (!(hi > lo)) continue;
      const double clamp_lo = std::clamp(lo, -1.0, static_cast<double>(width) + 1.0);
      const double clamp_hi = std::clamp(hi, -1.0, static_cast<double>(width) + 1.0);
      long c0 = first_center_at_or_after(clamp_lo);
      long c1 = first_center_at_or_after(clamp_hi);  // exclusive
      c0 = std::max(c0, 0L);
      c1 = std::min(c1, static_cast<long>(width));
      for (long c = c0; c < c1; ++c) mask.set(static_cast<int>(c), row);
    }
  }
  return mask;
}

BitMask rasterize(const PolygonShape& shape, const Rect& placement) {
  const int w = static_cast<int>(std::ceil(placement.x + placement.w));
  const int h = static_cast<int>(std::ceil(placement.y + placement.h));
  if (w <= 0 || h <= 0) throw Error(ErrorKind::InvalidArgument, "rasterize: empty raster");
  return rasterize(shape, placement, w, h);
}

double mask_iou(const BitMask& a, const BitMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::InvalidArgument, "mask_iou: dimension mismatch");
  }
  std::size_t inter = 0, uni = 0;
  const auto ba = a.bits();
  const auto bb = b.bits();
  for (std::size_t i = 0; i < ba.size(); ++i) {
    inter += (ba[i] & bb[i]);
    uni += (ba[i] | bb[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

nlohmann::json shape_to_json(const PolygonShape& shape) {
  nlohmann::json verts = nlohmann::json::array();
  for (const auto& v : shape.vertices()) verts.push_back({v.radius, v.angle});
  return nlohmann::json{{"vertices", verts}};
}

PolygonShape shape_from_json(const nlohmann::json& doc, std::size_t max_vertices) {
  if (!doc.is_object() || !doc.contains("vertices") || !doc["vertices"].is_array()) {
    throw Error(ErrorKind::InvalidArgument, "shape json: expected {\"vertices\": [...]}");
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "vertices") {
      throw Error(ErrorKind::InvalidArgument, "shape json: unknown key \"" + it.key() + "\"");
    }
  }
  std::vector<PolarVertex> v;
  for (const auto& item : doc["vertices"]) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number()) {
      throw Error(ErrorKind::InvalidArgument, "shape json: vertex must be [radius, angle]");
    }
    v.push_back({item[0].get<double>(), item[1].get<double>()});
  }
  return PolygonShape(std::move(v), max_vertices);
}

void save_shape(const PolygonShape& shape, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << shape_to_json(shape).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

PolygonShape load_shape(const std::filesystem::path& path, std::size_t max_vertices) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
  return shape_from_json(doc, max_vertices);
}

}  // namespace dualpatch
