#include "cubetrack/detect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <Eigen/Eigenvalues>

#include "cubetrack/errors.hpp"

namespace cubetrack {

std::vector<std::uint8_t> adaptive_threshold(const GrayImage& image, int window, int offset) {
  const int w = image.width, h = image.height;
  const int r = window / 2;
  const int stride = w + 1;
  std::vector<std::int32_t> sat(static_cast<std::size_t>(stride) * (h + 1), 0);
  for (int y = 0; y < h; ++y) {
    std::int32_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += image.at(x, y);
      sat[static_cast<std::size_t>(y + 1) * stride + x + 1] = sat[static_cast<std::size_t>(y) * stride + x + 1] + row;
    }
  }
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
    const std::int32_t* top = sat.data() + static_cast<std::size_t>(y0) * stride;
    const std::int32_t* bottom = sat.data() + static_cast<std::size_t>(y1 + 1) * stride;
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
      const std::int32_t area = (x1 - x0 + 1) * (y1 - y0 + 1);
      const std::int32_t sum = bottom[x1 + 1] - bottom[x0] - top[x1 + 1] + top[x0];
      // pixel < sum / area - offset, in integers
      mask[static_cast<std::size_t>(y) * w + x] = (image.at(x, y) + offset) * area < sum ? 1 : 0;
    }
  }
  return mask;
}

namespace {

// Clockwise on screen (y down), starting west.
constexpr std::array<std::array<int, 2>, 8> kDirs = {{{-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};

}  // namespace

namespace {

template <typename Fg>
std::vector<std::array<int, 2>> trace_border_with(Fg fg, std::array<int, 2> start, std::size_t limit) {
  std::vector<std::array<int, 2>> contour{start};
  // The west neighbour of the first raster pixel is background, so the
  // clockwise sweep can start there.
  int first_dir = -1;
  for (int k = 0; k < 8; ++k) {
    if (fg(start[0] + kDirs[k][0], start[1] + kDirs[k][1])) {
      first_dir = k;
      break;
    }
  }
  if (first_dir < 0) return contour;

  std::array<int, 2> cur = start;
  int dir = first_dir;
  while (contour.size() < limit) {
    cur = {cur[0] + kDirs[dir][0], cur[1] + kDirs[dir][1]};
    // Resume the sweep just past the pixel we came from.
    const int back = (dir + 4) % 8;
    int next = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (fg(cur[0] + kDirs[d][0], cur[1] + kDirs[d][1])) {
        next = d;
        break;
      }
    }
    if (cur == start && next == first_dir) break;
    contour.push_back(cur);
    if (next < 0) break;
    dir = next;
  }
  return contour;
}

}  // namespace

std::vector<std::array<int, 2>> trace_border(const std::vector<std::uint8_t>& mask, int width, int height,
                                             std::array<int, 2> start) {
  auto fg = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < width && y < height && mask[static_cast<std::size_t>(y) * width + x] != 0;
  };
  return trace_border_with(fg, start, 4 * static_cast<std::size_t>(width) * height + 8);
}

namespace {

void douglas_peucker(const std::vector<Vec2>& pts, std::size_t a, std::size_t b, double eps, std::vector<std::size_t>& keep) {
  // pts is an open chain indexed a..b inclusive
  double best = -1.0;
  std::size_t best_i = a;
  const Vec2 pa = pts[a], pb = pts[b];
  const Vec2 d = pb - pa;
  const double len = d.norm();
  for (std::size_t i = a + 1; i < b; ++i) {
    const double dist = len > 0 ? std::abs(cross2(pa, pb, pts[i])) / len : (pts[i] - pa).norm();
    if (dist > best) {
      best = dist;
      best_i = i;
    }
  }
  if (best > eps) {
    douglas_peucker(pts, a, best_i, eps, keep);
    keep.push_back(best_i);
    douglas_peucker(pts, best_i, b, eps, keep);
  }
}

}  // namespace

std::vector<Vec2> simplify_closed_polygon(const std::vector<Vec2>& contour, double epsilon) {
  const std::size_t n = contour.size();
  if (n < 3) return contour;
  // Split the ring at a likely vertex: the point farthest from the centroid,
  // then the point farthest from that one.
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : contour) centroid += p;
  centroid /= static_cast<double>(n);
  std::size_t first = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (contour[i] - centroid).squaredNorm();
    if (d > best) {
      best = d;
      first = i;
    }
  }
  std::vector<Vec2> ring;
  ring.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) ring.push_back(contour[(first + i) % n]);
  ring.push_back(ring.front());
  std::size_t far = 0;
  best = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = (ring[i] - ring[0]).squaredNorm();
    if (d > best) {
      best = d;
      far = i;
    }
  }
  std::vector<std::size_t> keep{0};
  douglas_peucker(ring, 0, far, epsilon, keep);
  keep.push_back(far);
  douglas_peucker(ring, far, n, epsilon, keep);
  std::vector<Vec2> out;
  out.reserve(keep.size());
  for (std::size_t k : keep) out.push_back(ring[k]);
  // The split points themselves may lie on a straight run.
  bool removed = true;
  while (removed && out.size() > 3) {
    removed = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Vec2& a = out[(i + out.size() - 1) % out.size()];
      const Vec2& c = out[(i + 1) % out.size()];
      const double len = (c - a).norm();
      if (len > 0 && std::abs(cross2(a, c, out[i])) / len <= epsilon) {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
        removed = true;
        break;
      }
    }
  }
  return out;
}

std::optional<PayloadCode> read_payload(const GrayImage& image, const std::array<Vec2, 4>& corners,
                                        int* border_errors, double min_contrast) {
  const double n = kMarkerCells;
  const std::array<Vec2, 4> canon = {Vec2(0, 0), Vec2(0, n), Vec2(n, n), Vec2(n, 0)};
  Homography h;
  try {
    h = solve_homography(canon, corners);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::array<double, kMarkerCells * kMarkerCells> cells{};
  double lo = 1e9, hi = -1e9;
  for (int r = 0; r < kMarkerCells; ++r) {
    for (int c = 0; c < kMarkerCells; ++c) {
      double s = 0.0;
      // 3x3 samples over the central half of the cell
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
          const Vec2 p = h.apply(Vec2(c + 0.25 + 0.25 * i, r + 0.25 + 0.25 * j));
          s += image.sample_bilinear(p.x(), p.y());
        }
      cells[r * kMarkerCells + c] = s / 9.0;
      lo = std::min(lo, s / 9.0);
      hi = std::max(hi, s / 9.0);
    }
  }
  if (hi - lo < min_contrast) return std::nullopt;
  const double thr = 0.5 * (lo + hi);
  int border = 0;
  PayloadCode code = 0;
  for (int r = 0; r < kMarkerCells; ++r) {
    for (int c = 0; c < kMarkerCells; ++c) {
      const bool white = cells[r * kMarkerCells + c] > thr;
      const bool is_border = r == 0 || c == 0 || r == kMarkerCells - 1 || c == kMarkerCells - 1;
      if (is_border) {
        border += white ? 1 : 0;
      } else if (white) {
        code |= static_cast<PayloadCode>(1u << ((r - 1) * kPayloadBits + (c - 1)));
      }
    }
  }
  if (border_errors) *border_errors = border;
  return code;
}

namespace {

// Sub-pixel position of each quad side from intensity mid-level crossings,
// then corners as intersections of the fitted lines.
std::optional<std::array<Vec2, 4>> refine_quad_edges(const GrayImage& image, const std::array<Vec2, 4>& q) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : q) centroid += p / 4.0;
  std::array<Eigen::Vector3d, 4> lines;  // ax + by + c = 0, (a, b) unit

  for (int i = 0; i < 4; ++i) {
    const Vec2 a = q[i], b = q[(i + 1) % 4];
    // Stay within about half a cell across the edge, measured along the
    // adjacent sides, so the profile never reaches a neighbouring edge.
    const double across = std::min((q[(i + 3) % 4] - a).norm(), (q[(i + 2) % 4] - b).norm());
    const double reach = std::max(0.6 * across / kMarkerCells, 0.75);
    const Vec2 dir = (b - a).normalized();
    Vec2 normal(-dir.y(), dir.x());
    if (normal.dot((a + b) / 2.0 - centroid) < 0) normal = -normal;
    const double len = (b - a).norm();
    const int samples = std::clamp(static_cast<int>(len * 0.7), 5, 32);
    const int steps = std::clamp(static_cast<int>(8.0 * reach) + 1, 13, 41);
    const double ds = 2.0 * reach / (steps - 1);
    std::vector<Vec2> edge_pts;
    for (int s = 0; s < samples; ++s) {
      const double t = 0.15 + 0.7 * (s + 0.5) / samples;
      const Vec2 p = a + (b - a) * t;
      // Area estimate of the step position: the dark fraction integrated
      // across the edge equals the distance from the inner end to the edge.
      std::array<double, 41> prof{};
      for (int k = 0; k < steps; ++k) {
        const Vec2 x = p + normal * (-reach + ds * k);
        prof[k] = image.sample_bilinear(x.x(), x.y());
      }
      const double lo = (prof[0] + prof[1] + prof[2]) / 3.0;
      const double hi = (prof[steps - 1] + prof[steps - 2] + prof[steps - 3]) / 3.0;
      if (hi - lo < 20.0) continue;
      double dark = 0.0;
      for (int k = 0; k + 1 < steps; ++k) {
        const double d0 = std::clamp((hi - prof[k]) / (hi - lo), 0.0, 1.0);
        const double d1 = std::clamp((hi - prof[k + 1]) / (hi - lo), 0.0, 1.0);
        dark += 0.5 * (d0 + d1) * ds;
      }
      edge_pts.push_back(p + normal * (dark - reach));
    }
    if (edge_pts.size() < 3) return std::nullopt;
    Vec2 mean = Vec2::Zero();
    for (const auto& p : edge_pts) mean += p;
    mean /= static_cast<double>(edge_pts.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : edge_pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Vec2 n = es.eigenvectors().col(0);
    lines[i] = Eigen::Vector3d(n.x(), n.y(), -n.dot(mean));
  }
  double min_side = 1e9;
  for (int i = 0; i < 4; ++i) min_side = std::min(min_side, (q[(i + 1) % 4] - q[i]).norm());
  const double max_move = std::max(3.0, 0.5 * min_side / kMarkerCells);
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    // corner i joins side i-1 and side i
    const Eigen::Vector3d x = lines[(i + 3) % 4].cross(lines[i]);
    if (std::abs(x.z()) < 1e-12) return std::nullopt;
    out[i] = x.hnormalized();
    if ((out[i] - q[i]).norm() > max_move) return std::nullopt;
  }
  return out;
}

struct Candidate {
  std::array<Vec2, 4> quad;
  double area;
};

}  // namespace

std::vector<MarkerObservation> detect_markers(const GrayImage& image, const Dictionary& dict,
                                              const DetectorParams& params) {
  std::vector<MarkerObservation> result;
  if (image.width < 8 || image.height < 8) return result;
  const int w = image.width, h = image.height;
  const auto mask = adaptive_threshold(image, params.threshold_window, params.threshold_offset);

  // 8-connected components; the first pixel found in raster order seeds the
  // border trace. Buffers carry a one-pixel frame so neighbours need no bounds checks.
  const int pw = w + 2;
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(pw) * (h + 2), 0);
  for (int y = 0; y < h; ++y)
    std::copy_n(mask.begin() + static_cast<std::ptrdiff_t>(y) * w, w, fg.begin() + static_cast<std::ptrdiff_t>(y + 1) * pw + 1);
  std::array<std::ptrdiff_t, 8> offsets;
  for (int k = 0; k < 8; ++k) offsets[k] = kDirs[k][1] * pw + kDirs[k][0];
  std::vector<int> label(fg.size(), 0);
  std::vector<std::ptrdiff_t> stack;
  std::vector<Candidate> candidates;
  int next_label = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(y + 1) * pw + x + 1;
      if (!fg[i0] || label[i0]) continue;
      ++next_label;
      int count = 0;
      bool touches_border = false;
      stack.assign(1, i0);
      label[i0] = next_label;
      while (!stack.empty()) {
        const std::ptrdiff_t i = stack.back();
        stack.pop_back();
        ++count;
        const std::ptrdiff_t px = i % pw, py = i / pw;
        if (px == 1 || py == 1 || px == w || py == h) touches_border = true;
        for (const auto off : offsets) {
          const std::ptrdiff_t ni = i + off;
          if (fg[ni] && !label[ni]) {
            label[ni] = next_label;
            stack.push_back(ni);
          }
        }
      }
      if (count < params.min_component_pixels || touches_border) continue;

      const int lbl = next_label;
      auto comp_fg = [&](int cx, int cy) {
        return cx >= 0 && cy >= 0 && cx < w && cy < h && label[static_cast<std::size_t>(cy + 1) * pw + cx + 1] == lbl;
      };
      const auto border = trace_border_with(comp_fg, {x, y}, 4 * static_cast<std::size_t>(count) + 8);
      if (border.size() < 8) continue;
      std::vector<Vec2> contour;
      contour.reserve(border.size());
      for (const auto& b : border) contour.emplace_back(b[0], b[1]);
      double perimeter = 0.0;
      for (std::size_t i = 0; i < contour.size(); ++i) perimeter += (contour[(i + 1) % contour.size()] - contour[i]).norm();
      const auto poly = simplify_closed_polygon(contour, params.poly_epsilon * perimeter);
      if (poly.size() != 4) continue;
      std::array<Vec2, 4> quad = {poly[0], poly[1], poly[2], poly[3]};
      if (!is_strictly_convex(quad)) continue;
      // Boundary pixel centres sit half a pixel inside the dark region's edge.
      Vec2 c = Vec2::Zero();
      for (const auto& p : quad) c += p / 4.0;
      for (auto& p : quad) {
        const Vec2 d = p - c;
        p += Vec2(d.x() > 0 ? 0.5 : -0.5, d.y() > 0 ? 0.5 : -0.5);
      }
      if (signed_quad_area(quad) > 0) std::swap(quad[1], quad[3]);
      const double area = std::abs(signed_quad_area(quad));
      if (area < params.min_quad_area) continue;
      candidates.push_back({quad, area});
    }
  }

  auto decode = [&](const std::array<Vec2, 4>& quad) -> std::optional<MarkerObservation> {
    int border_err = 0;
    const auto code = read_payload(image, quad, &border_err, params.min_cell_contrast);
    if (!code || border_err > params.max_border_errors) return std::nullopt;
    std::optional<DictionaryMatch> found;
    int found_shift = 0;
    for (int shift = 0; shift < 4; ++shift) {
      // Reading from corner `shift` onward yields the code turned `shift` quarter turns.
      const PayloadCode turned = rotate_code(*code, shift);
      for (const auto& p : dict.patterns()) {
        const int d = hamming(turned, p.code);
        if (d <= params.max_bit_errors && (!found || d < found->bit_errors)) {
          found = DictionaryMatch{p.id, 0, d};
          found_shift = shift;
        }
      }
    }
    if (!found) return std::nullopt;
    MarkerObservation obs{found->id, {}};
    for (int k = 0; k < 4; ++k) obs.corners[k] = quad[(k + found_shift) % 4];
    return obs;
  };

  std::map<int, std::pair<MarkerObservation, double>> best;
  for (const auto& cand : candidates) {
    // The coarse quad is already good to a pixel, enough to read the code;
    // only decodable candidates pay for edge refinement.
    auto coarse = decode(cand.quad);
    if (!coarse) continue;
    std::optional<MarkerObservation> obs = coarse;
    if (params.refine_edges) {
      std::array<Vec2, 4> quad = cand.quad;
      for (int pass = 0; pass < 2; ++pass)
        if (auto refined = refine_quad_edges(image, quad)) quad = *refined;
      obs = is_strictly_convex(quad) ? decode(quad) : std::nullopt;
    }
    if (!obs) continue;
    const double area = std::abs(signed_quad_area(obs->corners));
    auto it = best.find(obs->id);
    if (it == best.end() || area > it->second.second) best[obs->id] = {*obs, area};
  }
  for (auto& [id, entry] : best) result.push_back(entry.first);
  return result;
}

Vec2 refine_corner_subpixel(const GrayImage& image, const Vec2& corner) {
  constexpr int kHalf = 4;
  if (corner.x() < kHalf || corner.y() < kHalf || corner.x() > image.width - 1 - kHalf ||
      corner.y() > image.height - 1 - kHalf)
    throw NearBorder("corner (" + std::to_string(corner.x()) + ", " + std::to_string(corner.y()) + ")");

  // Gaussian window weights as in the classic saddle-point formulation.
  std::array<double, (2 * kHalf + 1) * (2 * kHalf + 1)> weight{};
  for (int dy = -kHalf; dy <= kHalf; ++dy)
    for (int dx = -kHalf; dx <= kHalf; ++dx)
      weight[(dy + kHalf) * (2 * kHalf + 1) + dx + kHalf] = std::exp(-(dx * dx + dy * dy) / (2.0 * kHalf * kHalf / 2.0));

  Vec2 q = corner;
  for (int it = 0; it < 40; ++it) {
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Vec2 b = Vec2::Zero();
    for (int dy = -kHalf; dy <= kHalf; ++dy) {
      for (int dx = -kHalf; dx <= kHalf; ++dx) {
        const Vec2 p = q + Vec2(dx, dy);
        const double gx = 0.5 * (image.sample_bilinear(p.x() + 1, p.y()) - image.sample_bilinear(p.x() - 1, p.y()));
        const double gy = 0.5 * (image.sample_bilinear(p.x(), p.y() + 1) - image.sample_bilinear(p.x(), p.y() - 1));
        const double wgt = weight[(dy + kHalf) * (2 * kHalf + 1) + dx + kHalf];
        const Eigen::Matrix2d g = wgt * Vec2(gx, gy) * Vec2(gx, gy).transpose();
        a += g;
        b += g * p;
      }
    }
    const double det = a.determinant();
    if (!(std::abs(det) > 1e-9 * (a.trace() * a.trace() + 1e-12)) || a.trace() < 1e-9) return q;
    const Vec2 next = a.inverse() * b;
    if ((next - corner).norm() > 3.0) return corner;
    const double step = (next - q).norm();
    q = next;
    if (step < 1e-3) break;
  }
  return q;
}

}  // namespace cubetrack
