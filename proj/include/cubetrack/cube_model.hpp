#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "cubetrack/geometry.hpp"
#include "cubetrack/image.hpp"

namespace cubetrack {

/// Side length of the payload grid; a marker is (kPayloadBits + 2) cells wide
/// including its one-cell black border.
inline constexpr int kPayloadBits = 4;
inline constexpr int kMarkerCells = kPayloadBits + 2;
inline constexpr int kMaxDictionarySize = 64;
inline constexpr int kMinHammingDistance = 4;

/// 16-bit payload, bit (r * 4 + c) is cell (r, c); a set bit is a white cell.
using PayloadCode = std::uint16_t;

PayloadCode rotate_code(PayloadCode code, int quarter_turns_clockwise);
int hamming(PayloadCode a, PayloadCode b);
/// Minimum distance between `a` and every rotation of `b`.
int rotational_distance(PayloadCode a, PayloadCode b);
/// Minimum distance between `a` and its own non-trivial rotations.
int self_rotational_distance(PayloadCode a);

struct MarkerPattern {
  int id = 0;
  PayloadCode code = 0;

  bool payload_white(int r, int c) const { return (code >> (r * kPayloadBits + c)) & 1u; }
  /// Full grid cell including the border; border cells are always black.
  bool cell_black(int r, int c) const;
};

struct DictionaryMatch {
  int id = 0;
  int rotation = 0;  ///< quarter turns (clockwise) applied to the stored pattern
  int bit_errors = 0;
};

class Dictionary {
 public:
  Dictionary() = default;
  explicit Dictionary(std::vector<MarkerPattern> patterns);

  const std::vector<MarkerPattern>& patterns() const { return patterns_; }
  std::size_t size() const { return patterns_.size(); }
  const MarkerPattern* find(int id) const;

  /// Best entry within `max_errors` bits of `code` under any rotation.
  std::optional<DictionaryMatch> identify(PayloadCode code, int max_errors) const;

 private:
  std::vector<MarkerPattern> patterns_;
};

/// Seeded greedy search over random payloads: every accepted pattern is at
/// rotational distance >= 4 from all earlier ones and from its own rotations.
/// Throws std::invalid_argument for count outside [1, 64] and
/// DictionaryExhausted after 10^6 rejected candidates.
Dictionary generate_dictionary(int count, std::uint64_t seed);

inline constexpr std::uint64_t kDefaultDictionarySeed = 7;

struct MarkerPlacement {
  int id = 0;
  /// Canonical order: top-left, bottom-left, bottom-right, top-right of the
  /// pattern, i.e. counter-clockwise seen from outside the cube.
  std::array<Vec3, 4> corners;
};

struct FaceLayout {
  int face = 0;
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();  ///< outward
  Vec3 u_axis = Vec3::UnitY();  ///< "right" seen from outside
  Vec3 v_axis = Vec3::UnitZ();  ///< "up" seen from outside; u x v == normal
  std::vector<MarkerPlacement> markers;

  Vec3 point(double u, double v) const { return center + u * u_axis + v * v_axis; }
};

/// Fiducial cube: four lateral faces (outward normals +x, +y, -x, -y in the
/// body frame, top along +z) each carrying a 2x2 grid of markers.
struct CubeLayout {
  double side_m = 0.09;
  double marker_m = 0.035;
  double margin_m = 0.005;
  std::vector<FaceLayout> faces;

  static CubeLayout make(double side_m = 0.09, double marker_m = 0.035, double margin_m = 0.005);

  const FaceLayout& face(int index) const;
  std::optional<int> face_of_marker(int id) const;
  /// Outer corners of the face square, same winding as marker corners.
  std::array<Vec3, 4> face_corners(int face_index) const;
  std::vector<int> marker_ids() const;
};

/// Throws UnknownMarker when the id is not on the cube.
std::array<Vec3, 4> marker_corners_3d(const CubeLayout& layout, int marker_id);

/// Appearance of one face as a function of face-plane coordinates (u, v),
/// meters from the face center: 0 inside black marker cells, 255 elsewhere
/// (including outside the face square).
class FaceAppearance {
 public:
  FaceAppearance(const CubeLayout& layout, const Dictionary& dict, int face);
  std::uint8_t operator()(double u, double v) const;
  /// True when the disc of radius r around (u, v) lies inside one cell (or
  /// entirely off-marker), so the intensity is constant over it.
  bool uniform_near(double u, double v, double r) const;

  /// Shading structure inside the square of half-size r around (u, v).
  struct Neighborhood {
    enum class Kind { Uniform, SingleEdge, Complex };
    Kind kind = Kind::Complex;
    /// SingleEdge: the boundary a*u + b*v + c = 0 with (a, b) unit; points
    /// with a*u + b*v + c > 0 have shade `positive`, the rest `negative`.
    double a = 0.0, b = 0.0, c = 0.0;
    std::uint8_t positive = 255, negative = 255;
  };
  Neighborhood neighborhood(double u, double v, double r) const;

 private:
  struct Marker {
    double u0, v0;        // top-left corner in face coordinates
    double ru, rv;        // unit vector along the pattern's columns
    double du, dv;        // unit vector along the pattern's rows
    const MarkerPattern* pattern;
  };
  double marker_m_;
  double cell_;
  std::vector<Marker> markers_;
};

std::uint8_t face_intensity(const CubeLayout& layout, const Dictionary& dict, int face, double u, double v);

/// Template raster coordinates <-> face-plane coordinates. The R x R raster
/// covers the face square exactly; pixel centers sit at integer coordinates.
Vec2 face_to_template(const CubeLayout& layout, double u, double v, int resolution);
Vec2 template_to_face(const CubeLayout& layout, const Vec2& px, int resolution);

struct FaceTemplate {
  int face = 0;
  GrayImage image;
};

/// Nearest-neighbour rasterization of the face appearance at pixel centers.
/// Throws std::invalid_argument for resolution < 64.
FaceTemplate render_template(const CubeLayout& layout, const Dictionary& dict, int face, int resolution = 256);

/// A single marker on white background, `px_per_cell` pixels per grid cell and
/// a quiet zone of `quiet_cells` cells on every side.
GrayImage render_marker(const MarkerPattern& pattern, int px_per_cell, int quiet_cells);

}  // namespace cubetrack
