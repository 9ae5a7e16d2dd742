#pragma once

#include <array>
#include <vector>

#include "cubetrack/geometry.hpp"

namespace cubetrack {

/// A detected (or simulated) marker: id plus its four image corners in pixels,
/// ordered like MarkerPlacement::corners.
struct MarkerObservation {
  int id = 0;
  std::array<Vec2, 4> corners;
};

/// Signed shoelace area of the corner polygon in pixel coordinates (y down).
/// Canonical winding gives a negative value.
double signed_quad_area(const std::array<Vec2, 4>& q);
bool is_strictly_convex(const std::array<Vec2, 4>& q);

}  // namespace cubetrack
