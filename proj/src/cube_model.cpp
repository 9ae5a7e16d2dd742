#include "cubetrack/cube_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "cubetrack/errors.hpp"

namespace cubetrack {

PayloadCode rotate_code(PayloadCode code, int quarter_turns_clockwise) {
  int turns = ((quarter_turns_clockwise % 4) + 4) % 4;
  PayloadCode out = code;
  constexpr int n = kPayloadBits;
  while (turns-- > 0) {
    PayloadCode next = 0;
    // new[r][c] = old[n-1-c][r]
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if ((out >> ((n - 1 - c) * n + r)) & 1u) next |= static_cast<PayloadCode>(1u << (r * n + c));
    out = next;
  }
  return out;
}

int hamming(PayloadCode a, PayloadCode b) { return std::popcount(static_cast<unsigned>(a ^ b)); }

int rotational_distance(PayloadCode a, PayloadCode b) {
  int best = hamming(a, b);
  for (int r = 1; r < 4; ++r) best = std::min(best, hamming(a, rotate_code(b, r)));
  return best;
}

int self_rotational_distance(PayloadCode a) {
  int best = kPayloadBits * kPayloadBits;
  for (int r = 1; r < 4; ++r) best = std::min(best, hamming(a, rotate_code(a, r)));
  return best;
}

bool MarkerPattern::cell_black(int r, int c) const {
  if (r <= 0 || c <= 0 || r >= kMarkerCells - 1 || c >= kMarkerCells - 1) return true;
  return !payload_white(r - 1, c - 1);
}

Dictionary::Dictionary(std::vector<MarkerPattern> patterns) : patterns_(std::move(patterns)) {}

const MarkerPattern* Dictionary::find(int id) const {
  for (const auto& p : patterns_)
    if (p.id == id) return &p;
  return nullptr;
}

std::optional<DictionaryMatch> Dictionary::identify(PayloadCode code, int max_errors) const {
  std::optional<DictionaryMatch> best;
  for (const auto& p : patterns_) {
    for (int r = 0; r < 4; ++r) {
      const int d = hamming(code, rotate_code(p.code, r));
      if (d <= max_errors && (!best || d < best->bit_errors)) best = DictionaryMatch{p.id, r, d};
    }
  }
  return best;
}

Dictionary generate_dictionary(int count, std::uint64_t seed) {
  if (count < 1 || count > kMaxDictionarySize)
    throw std::invalid_argument("dictionary size must be in [1, 64], got " + std::to_string(count));
  std::mt19937_64 rng(seed);
  std::vector<MarkerPattern> out;
  constexpr long kBudget = 1'000'000;
  for (long tried = 0; tried < kBudget && static_cast<int>(out.size()) < count; ++tried) {
    const auto code = static_cast<PayloadCode>(rng() & 0xFFFFu);
    if (self_rotational_distance(code) < kMinHammingDistance) continue;
    bool ok = true;
    for (const auto& p : out) {
      if (rotational_distance(code, p.code) < kMinHammingDistance) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back({static_cast<int>(out.size()), code});
  }
  if (static_cast<int>(out.size()) < count)
    throw DictionaryExhausted("found " + std::to_string(out.size()) + " of " + std::to_string(count) + " patterns");
  return Dictionary(std::move(out));
}

CubeLayout CubeLayout::make(double side_m, double marker_m, double margin_m) {
  if (!(side_m > 0.0) || !(marker_m > 0.0) || !(margin_m >= 0.0) || 2.0 * marker_m + margin_m > side_m)
    throw std::invalid_argument("marker grid does not fit on the cube face");
  CubeLayout layout;
  layout.side_m = side_m;
  layout.marker_m = marker_m;
  layout.margin_m = margin_m;
  const Vec3 up = Vec3::UnitZ();
  const std::array<Vec3, 4> normals = {Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitX(), -Vec3::UnitY()};
  const double h = marker_m / 2.0;
  const double offset = (marker_m + margin_m) / 2.0;
  // slot 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
  const std::array<Vec2, 4> slot_centers = {Vec2(-offset, offset), Vec2(offset, offset), Vec2(-offset, -offset),
                                            Vec2(offset, -offset)};
  for (int f = 0; f < 4; ++f) {
    FaceLayout face;
    face.face = f;
    face.normal = normals[f];
    face.center = normals[f] * (side_m / 2.0);
    face.v_axis = up;
    face.u_axis = up.cross(face.normal);
    for (int s = 0; s < 4; ++s) {
      const Vec2 c = slot_centers[s];
      MarkerPlacement m;
      m.id = 4 * f + s;
      m.corners = {face.point(c.x() - h, c.y() + h), face.point(c.x() - h, c.y() - h),
                   face.point(c.x() + h, c.y() - h), face.point(c.x() + h, c.y() + h)};
      face.markers.push_back(m);
    }
    layout.faces.push_back(std::move(face));
  }
  return layout;
}

const FaceLayout& CubeLayout::face(int index) const {
  for (const auto& f : faces)
    if (f.face == index) return f;
  throw std::out_of_range("no face " + std::to_string(index));
}

std::optional<int> CubeLayout::face_of_marker(int id) const {
  for (const auto& f : faces)
    for (const auto& m : f.markers)
      if (m.id == id) return f.face;
  return std::nullopt;
}

std::array<Vec3, 4> CubeLayout::face_corners(int face_index) const {
  const FaceLayout& f = face(face_index);
  const double h = side_m / 2.0;
  return {f.point(-h, h), f.point(-h, -h), f.point(h, -h), f.point(h, h)};
}

std::vector<int> CubeLayout::marker_ids() const {
  std::vector<int> ids;
  for (const auto& f : faces)
    for (const auto& m : f.markers) ids.push_back(m.id);
  return ids;
}

std::array<Vec3, 4> marker_corners_3d(const CubeLayout& layout, int marker_id) {
  for (const auto& f : layout.faces)
    for (const auto& m : f.markers)
      if (m.id == marker_id) return m.corners;
  throw UnknownMarker("id " + std::to_string(marker_id));
}

FaceAppearance::FaceAppearance(const CubeLayout& layout, const Dictionary& dict, int face)
    : marker_m_(layout.marker_m), cell_(layout.marker_m / kMarkerCells) {
  const FaceLayout& f = layout.face(face);
  for (const auto& m : f.markers) {
    const MarkerPattern* p = dict.find(m.id);
    if (p == nullptr) throw UnknownMarker("id " + std::to_string(m.id) + " missing from dictionary");
    // Corner 0 is the pattern's top-left, corner 3 its top-right, corner 1 its bottom-left.
    const Vec3 tl = m.corners[0] - f.center;
    const Vec3 right = (m.corners[3] - m.corners[0]).normalized();
    const Vec3 down = (m.corners[1] - m.corners[0]).normalized();
    markers_.push_back({tl.dot(f.u_axis), tl.dot(f.v_axis), right.dot(f.u_axis), right.dot(f.v_axis),
                        down.dot(f.u_axis), down.dot(f.v_axis), p});
  }
}

std::uint8_t FaceAppearance::operator()(double u, double v) const {
  for (const auto& m : markers_) {
    const double du = u - m.u0, dv = v - m.v0;
    const double along = du * m.ru + dv * m.rv;
    const double across = du * m.du + dv * m.dv;
    if (along < 0.0 || across < 0.0 || along >= marker_m_ || across >= marker_m_) continue;
    const int c = std::min(static_cast<int>(along / cell_), kMarkerCells - 1);
    const int r = std::min(static_cast<int>(across / cell_), kMarkerCells - 1);
    return m.pattern->cell_black(r, c) ? 0 : 255;
  }
  return 255;
}

bool FaceAppearance::uniform_near(double u, double v, double r) const {
  return neighborhood(u, v, r).kind == Neighborhood::Kind::Uniform;
}

FaceAppearance::Neighborhood FaceAppearance::neighborhood(double u, double v, double r) const {
  using Kind = Neighborhood::Kind;
  for (const auto& m : markers_) {
    const double du = u - m.u0, dv = v - m.v0;
    const double along = du * m.ru + dv * m.rv;
    const double across = du * m.du + dv * m.dv;
    if (along < -r || across < -r || along >= marker_m_ + r || across >= marker_m_ + r) continue;
    // Cells touched by the square, index -1 or kMarkerCells standing for the
    // white surround.
    auto cell_index = [&](double t) {
      return std::clamp(static_cast<int>(std::floor(t / cell_)), -1, kMarkerCells);
    };
    const int c0 = cell_index(along - r), c1 = cell_index(along + r);
    const int r0 = cell_index(across - r), r1 = cell_index(across + r);
    auto black = [&](int rr, int cc) {
      if (rr < 0 || cc < 0 || rr >= kMarkerCells || cc >= kMarkerCells) return false;
      return m.pattern->cell_black(rr, cc);
    };
    bool uniform = true, by_column = true, by_row = true;
    const bool first = black(r0, c0);
    for (int rr = r0; rr <= r1; ++rr) {
      for (int cc = c0; cc <= c1; ++cc) {
        const bool k = black(rr, cc);
        uniform = uniform && k == first;
        by_column = by_column && k == black(r0, cc);
        by_row = by_row && k == black(rr, c0);
      }
    }
    if (uniform) return {Kind::Uniform, 0, 0, 0, first ? std::uint8_t{0} : std::uint8_t{255}, 0};
    // One colour change along a single axis makes a straight boundary.
    auto single_change = [](int lo, int hi, auto&& at) {
      int changes = 0, where = lo;
      for (int i = lo + 1; i <= hi; ++i)
        if (at(i) != at(i - 1)) {
          ++changes;
          where = i;
        }
      return changes == 1 ? where : -100;
    };
    if (by_column) {
      const int k = single_change(c0, c1, [&](int cc) { return black(r0, cc); });
      if (k != -100) {
        // along = k * cell; along grows with (ru, rv)
        const double c = -(m.u0 * m.ru + m.v0 * m.rv) - k * cell_;
        return {Kind::SingleEdge, m.ru, m.rv, c, black(r0, k) ? std::uint8_t{0} : std::uint8_t{255},
                black(r0, k - 1) ? std::uint8_t{0} : std::uint8_t{255}};
      }
    }
    if (by_row) {
      const int k = single_change(r0, r1, [&](int rr) { return black(rr, c0); });
      if (k != -100) {
        const double c = -(m.u0 * m.du + m.v0 * m.dv) - k * cell_;
        return {Kind::SingleEdge, m.du, m.dv, c, black(k, c0) ? std::uint8_t{0} : std::uint8_t{255},
                black(k - 1, c0) ? std::uint8_t{0} : std::uint8_t{255}};
      }
    }
    return {};
  }
  return {Kind::Uniform, 0, 0, 0, 255, 255};
}

std::uint8_t face_intensity(const CubeLayout& layout, const Dictionary& dict, int face, double u, double v) {
  return FaceAppearance(layout, dict, face)(u, v);
}

Vec2 face_to_template(const CubeLayout& layout, double u, double v, int resolution) {
  return {(u / layout.side_m + 0.5) * resolution - 0.5, (0.5 - v / layout.side_m) * resolution - 0.5};
}

Vec2 template_to_face(const CubeLayout& layout, const Vec2& px, int resolution) {
  return {((px.x() + 0.5) / resolution - 0.5) * layout.side_m, (0.5 - (px.y() + 0.5) / resolution) * layout.side_m};
}

FaceTemplate render_template(const CubeLayout& layout, const Dictionary& dict, int face, int resolution) {
  if (resolution < 64) throw std::invalid_argument("template resolution must be >= 64");
  FaceTemplate t{face, GrayImage(resolution, resolution, 255)};
  const FaceAppearance appearance(layout, dict, face);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const Vec2 uv = template_to_face(layout, Vec2(x, y), resolution);
      t.image.at(x, y) = appearance(uv.x(), uv.y());
    }
  }
  return t;
}

GrayImage render_marker(const MarkerPattern& pattern, int px_per_cell, int quiet_cells) {
  const int cells = kMarkerCells + 2 * quiet_cells;
  GrayImage img(cells * px_per_cell, cells * px_per_cell, 255);
  for (int r = 0; r < kMarkerCells; ++r)
    for (int c = 0; c < kMarkerCells; ++c)
      if (pattern.cell_black(r, c))
        for (int y = 0; y < px_per_cell; ++y)
          for (int x = 0; x < px_per_cell; ++x)
            img.at((c + quiet_cells) * px_per_cell + x, (r + quiet_cells) * px_per_cell + y) = 0;
  return img;
}

}  // namespace cubetrack
