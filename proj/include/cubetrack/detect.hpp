#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/image.hpp"
#include "cubetrack/observation.hpp"

namespace cubetrack {

struct DetectorParams {
  int threshold_window = 15;     ///< adaptive-threshold neighbourhood (odd)
  int threshold_offset = 7;      ///< gray levels below the local mean count as dark
  double poly_epsilon = 0.03;    ///< polygon simplification tolerance, fraction of perimeter
  double min_quad_area = 25.0;   ///< px^2
  int min_component_pixels = 16;
  int max_bit_errors = 1;
  int max_border_errors = 2;
  double min_cell_contrast = 20.0;
  bool refine_edges = true;      ///< sub-pixel line fit of each quad side
};

/// Marker candidates in a grayscale image, identified against `dict`.
/// Corners come back in canonical winding; when an id is found twice the
/// larger quad wins. Never throws; returns an empty list when nothing decodes.
std::vector<MarkerObservation> detect_markers(const GrayImage& image, const Dictionary& dict,
                                              const DetectorParams& params = {});

/// Binary mask of dark pixels: value < local mean - offset.
std::vector<std::uint8_t> adaptive_threshold(const GrayImage& image, int window, int offset);

/// Outer boundary of the 8-connected foreground blob containing `start`
/// (which must be its first pixel in raster order), traced clockwise.
std::vector<std::array<int, 2>> trace_border(const std::vector<std::uint8_t>& mask, int width, int height,
                                             std::array<int, 2> start);

/// Douglas-Peucker simplification of a closed polygon.
std::vector<Vec2> simplify_closed_polygon(const std::vector<Vec2>& contour, double epsilon);

/// Samples the 6x6 cell grid of a quad whose corners are given in canonical
/// order. Returns the payload code and writes the number of border cells read
/// as white; nullopt when the cell contrast is too low to binarize.
std::optional<PayloadCode> read_payload(const GrayImage& image, const std::array<Vec2, 4>& corners,
                                        int* border_errors, double min_contrast = 20.0);

/// Gradient-weighted saddle-point refinement in a 9x9 window. A flat window
/// leaves the input unchanged, as does an iterate that wanders more than 3 px.
/// Throws NearBorder when the corner is closer than 4 px to the image border.
Vec2 refine_corner_subpixel(const GrayImage& image, const Vec2& corner);

}  // namespace cubetrack
