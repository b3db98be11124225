#pragma once

#include <algorithm>
#include <vector>

#include "dualpatch/geometry.hpp"
#include "dualpatch/rng.hpp"

namespace dptest {

// Valid star-shaped polygon with 3..max_k vertices and radii in [0.3, 1.5].
inline dualpatch::PolygonShape random_shape(dualpatch::Rng& rng, std::size_t max_k = 16) {
  using namespace dualpatch;
  for (;;) {
    const std::size_t k = 3 + rng.index(max_k - 2);
    std::vector<double> angles(k);
    for (double& a : angles) a = rng.uniform(0.0, kTwoPi);
    std::sort(angles.begin(), angles.end());
    std::vector<PolarVertex> v;
    for (double a : angles) v.push_back({rng.uniform(0.3, 1.5), a});
    if (validate(v, max_k).empty()) return PolygonShape(std::move(v), max_k);
  }
}

// Classic crossing-number point-in-polygon test.
inline bool pnpoly(const std::vector<dualpatch::Point>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

}  // namespace dptest
