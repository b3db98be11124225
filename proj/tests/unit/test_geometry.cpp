#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "dualpatch/error.hpp"
#include "dualpatch/geometry.hpp"
#include "dualpatch/rng.hpp"
#include "random_shapes.hpp"
#include "test_util.hpp"

using namespace dualpatch;

namespace {

PolygonShape unit_hexagon() {
  std::vector<PolarVertex> v;
  for (int i = 0; i < 6; ++i) v.push_back({1.0, i * kPi / 3.0});
  return PolygonShape(v);
}

bool has_message(const std::vector<std::string>& msgs, const std::string& needle) {
  for (const auto& m : msgs) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Geometry, HexagonAreaMatchesClosedForm) {
  EXPECT_NEAR(polygon_area(unit_hexagon()), 3.0 * std::sqrt(3.0) / 2.0, 1e-12);
}

TEST(Geometry, RegularPolygonHasRequestedArea) {
  for (std::size_t k : {3u, 4u, 6u, 8u, 12u, 16u}) {
    const auto s = PolygonShape::regular(k, 2.5);
    EXPECT_EQ(s.size(), k);
    EXPECT_NEAR(polygon_area(s), 2.5, 1e-12);
    EXPECT_DOUBLE_EQ(s[0].angle, kPi / static_cast<double>(k));
  }
}

TEST(Geometry, ValidateReportsEachViolation) {
  EXPECT_TRUE(has_message(validate(std::vector<PolarVertex>{{1, 0}, {1, 2}}), "K >= 3"));
  std::vector<PolarVertex> many;
  for (int i = 0; i < 17; ++i) many.push_back({1.0, i * kTwoPi / 17.0});
  EXPECT_TRUE(has_message(validate(many), "K <= K_max"));
  EXPECT_TRUE(has_message(validate(std::vector<PolarVertex>{{1, 0}, {-1, 2}, {1, 4}}), "radii > 0"));
  EXPECT_TRUE(has_message(validate(std::vector<PolarVertex>{{1, 0}, {1, 4}, {1, 2}}),
                          "strictly increasing"));
  EXPECT_TRUE(has_message(validate(std::vector<PolarVertex>{{1, 0}, {1, 0.5}, {1, 1.0}}),
                          "angle gaps < pi"));
  EXPECT_TRUE(has_message(validate(std::vector<PolarVertex>{{1, 0}, {1, 2}, {1, 7}}),
                          "angles in [0, 2pi)"));
  EXPECT_TRUE(has_message(validate(std::vector<PolarVertex>{{1, 0}, {NAN, 2}, {1, 4}}),
                          "finite values"));
  EXPECT_TRUE(validate(unit_hexagon().vertices()).empty());
}

TEST(Geometry, ConstructorRejectsInvalidInput) {
  EXPECT_THROW(PolygonShape(std::vector<PolarVertex>{{1, 0}, {1, 1}}), Error);
  EXPECT_THROW(PolygonShape::regular(2), Error);
  EXPECT_THROW(PolygonShape::regular(4, 0.0), Error);
}

TEST(Geometry, NormalizeAreaHitsTargetOnRandomShapes) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto s = dptest::random_shape(rng);
    const double target = rng.uniform(0.01, 50.0);
    const auto n = normalize_area(s, target);
    EXPECT_LE(std::abs(polygon_area(n) - target) / target, 1e-9);
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(n[k].angle, s[k].angle);
  }
  EXPECT_THROW(normalize_area(unit_hexagon(), -1.0), Error);
}

TEST(Geometry, ToCartesianScalesAboutCenter) {
  const auto pts = to_cartesian(unit_hexagon(), {10.0, 20.0}, 2.0);
  ASSERT_EQ(pts.size(), 6u);
  EXPECT_NEAR(pts[0].x, 12.0, 1e-12);
  EXPECT_NEAR(pts[0].y, 20.0, 1e-12);
  EXPECT_THROW(to_cartesian(unit_hexagon(), {0, 0}, 0.0), Error);
}

TEST(Geometry, BoundingBoxOfSquare) {
  const auto b = bounding_box(PolygonShape::regular(4, 1.0));
  EXPECT_NEAR(b.min_x, -0.5, 1e-12);
  EXPECT_NEAR(b.max_x, 0.5, 1e-12);
  EXPECT_NEAR(b.width(), 1.0, 1e-12);
  EXPECT_NEAR(b.height(), 1.0, 1e-12);
}

TEST(Geometry, RectIouHalfOverlap) {
  EXPECT_DOUBLE_EQ(rect_iou({0, 0, 2, 1}, {1, 0, 2, 1}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rect_iou({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(rect_iou({0, 0, 1, 1}, {5, 5, 1, 1}), 0.0);
  const Rect i = intersect({0, 0, 4, 4}, {2, 3, 10, 10});
  EXPECT_EQ(i, (Rect{2, 3, 2, 1}));
}

TEST(Geometry, UnitSquareFillsItsAnchor) {
  const auto m = rasterize(PolygonShape::regular(4, 1.0), Rect{2, 2, 8, 8}, 12, 12);
  EXPECT_EQ(m.popcount(), 64u);
  EXPECT_TRUE(m.get(2, 2));
  EXPECT_TRUE(m.get(9, 9));
  EXPECT_FALSE(m.get(1, 5));
  EXPECT_FALSE(m.get(10, 5));
}

TEST(Geometry, RasterizeMatchesPointInPolygonOracle) {
  Rng rng(2024);
  for (int i = 0; i < 40; ++i) {
    const auto s = normalize_area(dptest::random_shape(rng), 1.0);
    for (int n : {16, 32, 64}) {
      const double side = rng.uniform(0.3, 1.2) * n;
      const Rect anchor{rng.uniform(-0.2, 0.6) * n, rng.uniform(-0.2, 0.6) * n, side, side};
      const auto mask = rasterize(s, anchor, n, n);
      const auto poly = to_pixels(s, anchor);
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          ASSERT_EQ(mask.get(x, y), dptest::pnpoly(poly, x + 0.5, y + 0.5))
              << "shape " << i << " grid " << n << " pixel " << x << "," << y;
        }
      }
    }
  }
}

TEST(Geometry, RasterizeClipsOutsidePixels) {
  const auto m = rasterize(PolygonShape::regular(4, 1.0), Rect{-4, -4, 8, 8}, 10, 10);
  EXPECT_EQ(m.popcount(), 16u);
  const auto whole = rasterize(PolygonShape::regular(4, 1.0), Rect{1, 1, 4, 4});
  EXPECT_EQ(whole.width(), 5);
  EXPECT_EQ(whole.popcount(), 16u);
  EXPECT_THROW(rasterize(PolygonShape::regular(4), Rect{0, 0, 0, 4}, 4, 4), Error);
}

TEST(Geometry, MaskIou) {
  BitMask a(4, 4), b(4, 4);
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 1.0);
  a.set(0, 0);
  a.set(1, 0);
  b.set(1, 0);
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 0.5);
  EXPECT_THROW(mask_iou(a, BitMask(3, 4)), Error);
}

TEST(Geometry, JsonRoundTrip) {
  Rng rng(5);
  const auto s = dptest::random_shape(rng);
  EXPECT_EQ(shape_from_json(shape_to_json(s)), s);

  dptest::TempDir dir("geom");
  save_shape(s, dir / "shape.json");
  EXPECT_EQ(load_shape(dir / "shape.json"), s);
}

TEST(Geometry, JsonReaderRejectsBadDocuments) {
  EXPECT_THROW(shape_from_json(nlohmann::json::parse(R"({"vertices": [[1, 0], [1, 1]]})")), Error);
  EXPECT_THROW(shape_from_json(nlohmann::json::parse(
                   R"({"vertices": [[1, 0], [1, 2], [1, 4]], "extra": 1})")),
               Error);
  EXPECT_THROW(shape_from_json(nlohmann::json::parse(R"({"vertices": [[1, 0], [1, 4], [1, 2]]})")),
               Error);
  EXPECT_THROW(shape_from_json(nlohmann::json::parse(R"({"vertices": "nope"})")), Error);

  dptest::TempDir dir("geom-bad");
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_shape(dir / "bad.json"), Error);
  EXPECT_THROW(load_shape(dir / "missing.json"), Error);
}
