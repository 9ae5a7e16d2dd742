#include "cubetrack/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "cubetrack/errors.hpp"

namespace cubetrack {

double signed_quad_area(const std::array<Vec2, 4>& q) {
  double a = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2& p = q[i];
    const Vec2& n = q[(i + 1) % 4];
    a += p.x() * n.y() - n.x() * p.y();
  }
  return 0.5 * a;
}

bool is_strictly_convex(const std::array<Vec2, 4>& q) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross2(q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
    if (c == 0.0) return false;
    const int s = c > 0.0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

void NoiseModel::validate() const {
  if (!(corner_sigma >= 0.0)) throw std::invalid_argument("corner_sigma must be >= 0");
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) throw std::invalid_argument("dropout_prob must be in [0, 1]");
  if (blur_radius < 0) throw std::invalid_argument("blur_radius must be >= 0");
}

CameraIntrinsics default_camera() { return CameraIntrinsics{}; }

std::uint64_t frame_seed(std::uint64_t seed, int index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double face_view_cosine(const CubeLayout& layout, int face, const Pose& pose) {
  const FaceLayout& f = layout.face(face);
  const Vec3 n = pose.rotation * f.normal;
  const Vec3 c = pose.apply(f.center);
  return -n.dot(c.normalized());
}

std::vector<int> visible_faces(const CubeLayout& layout, const Pose& pose) {
  std::vector<int> out;
  for (const auto& f : layout.faces)
    if (face_view_cosine(layout, f.face, pose) > 0.0) out.push_back(f.face);
  return out;
}

namespace {

std::array<Vec3, 8> cube_vertices(const CubeLayout& layout) {
  const double h = layout.side_m / 2.0;
  std::array<Vec3, 8> v;
  int i = 0;
  for (double x : {-h, h})
    for (double y : {-h, h})
      for (double z : {-h, h}) v[i++] = Vec3(x, y, z);
  return v;
}

// A planar square patch of the cube surface with its own appearance.
struct SurfacePatch {
  Vec3 center, normal, u_axis, v_axis;
  const FaceAppearance* appearance = nullptr;  // null for plain faces
  std::uint8_t plain = 200;
};

// Accumulation buffers for the pixel window [x0, x0 + width) x [y0, y0 + height).
struct Raster {
  int x0 = 0, y0 = 0, width = 0, height = 0;
  std::vector<float> sum, cover;

  Raster(int x, int y, int w, int h)
      : x0(x), y0(y), width(w), height(h), sum(static_cast<std::size_t>(w) * h, 0.0f),
        cover(static_cast<std::size_t>(w) * h, 0.0f) {}
};

// Cranley-Patterson shift per pixel, from a hash of its coordinates.
Vec2 pixel_shift(int x, int y) {
  std::uint64_t z = frame_seed(static_cast<std::uint64_t>(x) * 0x1F123BB5ull, y);
  const double a = static_cast<double>(z >> 11) * 0x1.0p-53;
  z = frame_seed(z, 1);
  const double b = static_cast<double>(z >> 11) * 0x1.0p-53;
  return {a, b};
}

// Fraction of the pixel square centred on (px, py) where the face-plane line
// a*u + b*v + c (with (a, b) unit) is positive. (u, v) is a face point near
// the pixel and r the footprint radius in face units.
double line_coverage(const Mat3& face_to_camera, const CameraIntrinsics& cam, const Eigen::Vector3d& line, double u,
                     double v, double r, int px, int py) {
  const Vec2 n(line.x(), line.y());
  const Vec2 foot = Vec2(u, v) - (n.dot(Vec2(u, v)) + line.z()) * n;
  auto to_pixel = [&](const Vec2& q) {
    const Vec3 pc = face_to_camera * Vec3(q.x(), q.y(), 1.0);
    return cam.normalized_to_pixel({pc.x() / pc.z(), pc.y() / pc.z()});
  };
  const Vec2 p0 = to_pixel(foot);
  const Vec2 p1 = to_pixel(foot + r * Vec2(-n.y(), n.x()));
  const Vec2 inside = to_pixel(foot + r * n);
  Vec2 normal(-(p1 - p0).y(), (p1 - p0).x());
  if (normal.dot(inside - p0) < 0.0) normal = -normal;
  auto f = [&](const Vec2& q) { return normal.dot(q - p0); };

  // Clip the unit square against f >= 0 and take the area.
  const std::array<Vec2, 4> square = {Vec2(px - 0.5, py - 0.5), Vec2(px + 0.5, py - 0.5), Vec2(px + 0.5, py + 0.5),
                                      Vec2(px - 0.5, py + 0.5)};
  std::array<Vec2, 8> poly;
  int count = 0;
  for (int i = 0; i < 4; ++i) {
    const Vec2& a = square[i];
    const Vec2& b = square[(i + 1) % 4];
    const double fa = f(a), fb = f(b);
    if (fa >= 0.0) poly[count++] = a;
    if ((fa >= 0.0) != (fb >= 0.0)) poly[count++] = a + (b - a) * (fa / (fa - fb));
  }
  double area = 0.0;
  for (int i = 0; i < count; ++i) area += poly[i].x() * poly[(i + 1) % count].y() - poly[i].y() * poly[(i + 1) % count].x();
  return std::clamp(0.5 * std::abs(area), 0.0, 1.0);
}

void rasterize_patch(const SurfacePatch& patch, double half, const Pose& pose, const CameraIntrinsics& cam,
                     int supersample, Raster& raster) {
  const Vec3 n = pose.rotation * patch.normal;
  const Vec3 c = pose.apply(patch.center);
  if (-n.dot(c) <= 0.0) return;

  Mat3 h;
  h.col(0) = pose.rotation * patch.u_axis;
  h.col(1) = pose.rotation * patch.v_axis;
  h.col(2) = c;
  const Mat3 hi = h.inverse();

  // Bounding box from densely sampled (possibly distorted) edge points.
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  const std::array<Vec2, 4> sq = {Vec2(-half, half), Vec2(-half, -half), Vec2(half, -half), Vec2(half, half)};
  for (int e = 0; e < 4; ++e) {
    for (int k = 0; k < 8; ++k) {
      const Vec2 uv = sq[e] + (sq[(e + 1) % 4] - sq[e]) * (k / 8.0);
      const Vec2 px = project_point(h * Vec3(uv.x(), uv.y(), 1.0), cam);
      x0 = std::min(x0, px.x());
      y0 = std::min(y0, px.y());
      x1 = std::max(x1, px.x());
      y1 = std::max(y1, px.y());
    }
  }
  const int pad = cam.has_distortion() ? 3 : 1;
  const int bx0 = std::max(raster.x0, static_cast<int>(std::floor(x0)) - pad);
  const int by0 = std::max(raster.y0, static_cast<int>(std::floor(y0)) - pad);
  const int bx1 = std::min(raster.x0 + raster.width - 1, static_cast<int>(std::ceil(x1)) + pad);
  const int by1 = std::min(raster.y0 + raster.height - 1, static_cast<int>(std::ceil(y1)) + pad);

  auto to_face = [&](double px, double py, double& u, double& v) -> bool {
    Vec2 xy = cam.pixel_to_normalized({px, py});
    if (cam.has_distortion()) xy = cam.undistort_normalized(xy);
    const Vec3 p = hi * Vec3(xy.x(), xy.y(), 1.0);
    if (p.z() <= 0.0) return false;
    u = p.x() / p.z();
    v = p.y() / p.z();
    return true;
  };
  auto shade = [&](double u, double v) -> double {
    return patch.appearance ? (*patch.appearance)(u, v) : static_cast<double>(patch.plain);
  };
  const double jitter = cam.has_distortion() ? 1.5 : 1.05;

  for (int y = by0; y <= by1; ++y) {
    for (int x = bx0; x <= bx1; ++x) {
      double u, v;
      if (!to_face(x, y, u, v)) continue;
      // Footprint of the pixel in face units from the local projective Jacobian.
      const Vec2 xy = cam.pixel_to_normalized({double(x), double(y)});
      const double w = hi(2, 0) * xy.x() + hi(2, 1) * xy.y() + hi(2, 2);
      const double dudx = (hi(0, 0) - u * hi(2, 0)) / (w * cam.fx);
      const double dudy = (hi(0, 1) - u * hi(2, 1)) / (w * cam.fy);
      const double dvdx = (hi(1, 0) - v * hi(2, 0)) / (w * cam.fx);
      const double dvdy = (hi(1, 1) - v * hi(2, 1)) / (w * cam.fy);
      const double ap = dudx + dudy, bp = dvdx + dvdy, am = dudx - dudy, bm = dvdx - dvdy;
      const double r = jitter * 0.5 * std::sqrt(std::max(ap * ap + bp * bp, am * am + bm * bm));
      const std::size_t idx = static_cast<std::size_t>(y - raster.y0) * raster.width + (x - raster.x0);
      auto& sum = raster.sum;
      auto& cover = raster.cover;
      if (std::abs(u) > half + r || std::abs(v) > half + r) continue;
      // Face outline sides within reach, as lines positive toward the inside.
      int outline_lines = 0;
      Eigen::Vector3d outline(0.0, 0.0, 0.0);
      for (const Eigen::Vector3d& l : {Eigen::Vector3d(-1, 0, half), Eigen::Vector3d(1, 0, half),
                                       Eigen::Vector3d(0, -1, half), Eigen::Vector3d(0, 1, half)}) {
        if (l.x() * u + l.y() * v + l.z() < r) {
          ++outline_lines;
          outline = l;
        }
      }
      FaceAppearance::Neighborhood nb;
      if (patch.appearance) {
        nb = patch.appearance->neighborhood(u, v, r);
      } else {
        nb.kind = FaceAppearance::Neighborhood::Kind::Uniform;
        nb.positive = patch.plain;
      }
      const bool uniform = nb.kind == FaceAppearance::Neighborhood::Kind::Uniform;
      if (outline_lines == 0 && uniform) {
        sum[idx] += static_cast<float>(nb.positive);
        cover[idx] += 1.0f;
        continue;
      }
      // A single straight boundary across the pixel: exact box-filter coverage.
      const bool single_edge = outline_lines == 0 && nb.kind == FaceAppearance::Neighborhood::Kind::SingleEdge;
      if (!cam.has_distortion() && (single_edge || (outline_lines == 1 && uniform))) {
        const Eigen::Vector3d line = single_edge ? Eigen::Vector3d(nb.a, nb.b, nb.c) : outline;
        const double frac = line_coverage(h, cam, line, u, v, r, x, y);
        if (single_edge) {
          sum[idx] += static_cast<float>(nb.positive * frac + nb.negative * (1.0 - frac));
          cover[idx] += 1.0f;
        } else {
          sum[idx] += static_cast<float>(nb.positive * frac);
          cover[idx] += static_cast<float>(frac);
        }
        continue;
      }
      double s = 0.0;
      int hits = 0;
      // N-rooks pattern (every sample in its own row and column) under a
      // per-pixel toroidal shift, so coverage errors do not line up along edges.
      const Vec2 shift = pixel_shift(x, y);
      for (int j = 0; j < supersample; ++j) {
        for (int i = 0; i < supersample; ++i) {
          double ox = (i + (j + 0.5) / supersample) / supersample + shift.x();
          double oy = (j + (i + 0.5) / supersample) / supersample + shift.y();
          ox -= std::floor(ox);
          oy -= std::floor(oy);
          const double sx = x - 0.5 + ox;
          const double sy = y - 0.5 + oy;
          double su, sv;
          if (!to_face(sx, sy, su, sv)) continue;
          if (std::abs(su) > half || std::abs(sv) > half) continue;
          s += shade(su, sv);
          ++hits;
        }
      }
      const double inv = 1.0 / (supersample * supersample);
      sum[idx] += static_cast<float>(s * inv);
      cover[idx] += static_cast<float>(hits * inv);
    }
  }
}

void check_in_front(const CubeLayout& layout, const Pose& pose) {
  for (const Vec3& v : cube_vertices(layout))
    if (!(pose.apply(v).z() > 1e-6)) throw CubeNotVisible("cube not entirely in front of the camera");
}

}  // namespace

std::vector<MarkerObservation> simulate_observations(const CubeLayout& layout, const Pose& pose,
                                                     const CameraIntrinsics& cam, const NoiseModel& noise,
                                                     int index, const SceneStyle& style) {
  noise.validate();
  check_in_front(layout, pose);
  std::mt19937_64 rng(frame_seed(noise.seed, index));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<MarkerObservation> out;
  for (const auto& f : layout.faces) {
    const double cosv = face_view_cosine(layout, f.face, pose);
    if (cosv < style.min_view_cosine || cosv <= 0.0) continue;
    for (const auto& m : f.markers) {
      // Draw every random number unconditionally so the stream stays aligned.
      const bool dropped = uniform(rng) < noise.dropout_prob;
      std::array<double, 8> n;
      for (double& d : n) d = gauss(rng) * noise.corner_sigma;
      MarkerObservation obs{m.id, {}};
      bool inside = true;
      std::array<Vec2, 4> clean;
      for (int k = 0; k < 4; ++k) {
        clean[k] = project_point(pose.apply(m.corners[k]), cam);
        inside = inside && cam.contains(clean[k], 0.5);
        obs.corners[k] = clean[k] + Vec2(n[2 * k], n[2 * k + 1]);
      }
      if (dropped || !inside) continue;
      if (std::abs(signed_quad_area(clean)) < style.min_quad_area) continue;
      if (!is_strictly_convex(obs.corners) || std::abs(signed_quad_area(obs.corners)) < style.min_quad_area) continue;
      out.push_back(obs);
    }
  }
  return out;
}

SynthFrame render_frame(const CubeLayout& layout, const Dictionary& dict, const Pose& pose,
                        const CameraIntrinsics& cam, const NoiseModel& noise, int index, double t_s,
                        const SceneStyle& style) {
  noise.validate();
  cam.validate();
  if (visible_faces(layout, pose).empty()) throw CubeNotVisible("no marked face oriented toward the camera");
  check_in_front(layout, pose);

  SynthFrame frame;
  frame.index = index;
  frame.t_s = t_s;
  frame.true_pose = pose;

  // Only the window around the projected cube needs supersampling.
  const auto verts = cube_vertices(layout);
  double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
  for (std::size_t i = 0; i < verts.size(); ++i) {
    for (std::size_t j = i + 1; j < verts.size(); ++j) {
      for (int k = 0; k <= 8; ++k) {
        const Vec2 px = project_point(pose.apply(verts[i] + (verts[j] - verts[i]) * (k / 8.0)), cam);
        bx0 = std::min(bx0, px.x());
        by0 = std::min(by0, px.y());
        bx1 = std::max(bx1, px.x());
        by1 = std::max(by1, px.y());
      }
    }
  }
  const int pad = 4;
  const int rx0 = std::clamp(static_cast<int>(std::floor(bx0)) - pad, 0, cam.width - 1);
  const int ry0 = std::clamp(static_cast<int>(std::floor(by0)) - pad, 0, cam.height - 1);
  const int rx1 = std::clamp(static_cast<int>(std::ceil(bx1)) + pad, rx0, cam.width - 1);
  const int ry1 = std::clamp(static_cast<int>(std::ceil(by1)) + pad, ry0, cam.height - 1);
  Raster raster(rx0, ry0, rx1 - rx0 + 1, ry1 - ry0 + 1);
  const double half = layout.side_m / 2.0;
  std::vector<FaceAppearance> appearances;
  appearances.reserve(layout.faces.size());
  for (const auto& f : layout.faces) appearances.emplace_back(layout, dict, f.face);
  for (std::size_t i = 0; i < layout.faces.size(); ++i) {
    const auto& f = layout.faces[i];
    rasterize_patch({f.center, f.normal, f.u_axis, f.v_axis, &appearances[i], 0}, half, pose, cam,
                    style.supersample, raster);
  }
  for (double s : {1.0, -1.0}) {
    const Vec3 n = Vec3::UnitZ() * s;
    rasterize_patch({n * half, n, Vec3::UnitX(), n.cross(Vec3::UnitX()), nullptr, style.plain_face}, half, pose,
                    cam, style.supersample, raster);
  }

  frame.image = GrayImage(cam.width, cam.height, style.background);
  for (int y = ry0; y <= ry1; ++y) {
    for (int x = rx0; x <= rx1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y - ry0) * raster.width + (x - rx0);
      const double c = std::min(1.0f, raster.cover[i]);
      const double value = raster.sum[i] + (1.0 - c) * style.background;
      frame.image.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 255.0)));
    }
  }
  if (noise.blur_radius > 0) frame.image = box_blur(frame.image, noise.blur_radius);

  frame.observations = simulate_observations(layout, pose, cam, noise, index, style);
  return frame;
}

GrayImage composite_face(const GrayImage& base, const CubeLayout& layout, const FaceAppearance& appearance, int face,
                         const Pose& pose, const CameraIntrinsics& cam, int supersample) {
  if (base.width != cam.width || base.height != cam.height)
    throw SizeMismatch("base image does not match the camera resolution");
  const FaceLayout& f = layout.face(face);
  GrayImage out = base;
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const Vec3& corner : layout.face_corners(face)) {
    const Vec3 pc = pose.apply(corner);
    if (pc.z() <= 1e-6) throw FaceNotVisible("face " + std::to_string(face) + " crosses the camera plane");
    const Vec2 px = project_point(pc, cam);
    x0 = std::min(x0, px.x());
    y0 = std::min(y0, px.y());
    x1 = std::max(x1, px.x());
    y1 = std::max(y1, px.y());
  }
  const int pad = 4;
  const int rx0 = std::clamp(static_cast<int>(std::floor(x0)) - pad, 0, cam.width - 1);
  const int ry0 = std::clamp(static_cast<int>(std::floor(y0)) - pad, 0, cam.height - 1);
  const int rx1 = std::clamp(static_cast<int>(std::ceil(x1)) + pad, 0, cam.width - 1);
  const int ry1 = std::clamp(static_cast<int>(std::ceil(y1)) + pad, 0, cam.height - 1);
  Raster raster(rx0, ry0, rx1 - rx0 + 1, ry1 - ry0 + 1);
  rasterize_patch({f.center, f.normal, f.u_axis, f.v_axis, &appearance, 0}, layout.side_m / 2.0, pose, cam,
                  supersample, raster);
  for (int y = ry0; y <= ry1; ++y) {
    for (int x = rx0; x <= rx1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y - ry0) * raster.width + (x - rx0);
      const double c = std::min(1.0f, raster.cover[i]);
      if (c <= 0.0) continue;
      const double value = raster.sum[i] + (1.0 - c) * base.at(x, y);
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 255.0)));
    }
  }
  return out;
}

std::vector<Pose> SynthSequence::truth() const {
  std::vector<Pose> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.true_pose);
  return out;
}

namespace {

struct Waypoint {
  Vec3 position;
  Vec3 angles;  // yaw (body z), tilt (camera x), roll (camera z)
};

template <typename T>
T catmull_rom(const T& p0, const T& p1, const T& p2, const T& p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3);
}

Pose pose_from(const Vec3& position, const Vec3& angles) {
  const Quat q = Quat(Eigen::AngleAxisd(angles.z(), Vec3::UnitZ())) *
                 Quat(Eigen::AngleAxisd(std::numbers::pi / 2.0 + angles.y(), Vec3::UnitX())) *
                 Quat(Eigen::AngleAxisd(angles.x(), Vec3::UnitZ()));
  return {q, position};
}

Pose evaluate(const std::vector<Waypoint>& w, double tau) {
  const int n = static_cast<int>(w.size());
  tau = std::clamp(tau, 0.0, static_cast<double>(n - 1));
  const int i = std::min(static_cast<int>(tau), n - 2);
  const double u = tau - i;
  auto at = [&](int k) -> const Waypoint& { return w[std::clamp(k, 0, n - 1)]; };
  const Vec3 p = catmull_rom(at(i - 1).position, at(i).position, at(i + 1).position, at(i + 2).position, u);
  const Vec3 a = catmull_rom(at(i - 1).angles, at(i).angles, at(i + 1).angles, at(i + 2).angles, u);
  return pose_from(p, a);
}

bool pose_valid(const CubeLayout& layout, const CameraIntrinsics& cam, const Pose& pose, double margin,
                const SceneStyle& style) {
  for (const Vec3& v : cube_vertices(layout)) {
    const Vec3 pc = pose.apply(v);
    if (pc.z() < 0.05) return false;
    if (!cam.contains(project_point(pc, cam), margin)) return false;
  }
  double best = -1.0;
  for (int f : visible_faces(layout, pose)) best = std::max(best, face_view_cosine(layout, f, pose));
  return best >= std::max(style.min_view_cosine, 0.3);
}

std::vector<Pose> plan_path(const CubeLayout& layout, const CameraIntrinsics& cam, int n_frames, double rate_hz,
                            std::uint64_t seed, const TrajectoryOptions& opt, const SceneStyle& style) {
  if (n_frames < 2) throw std::invalid_argument("n_frames must be >= 2");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate_hz must be positive");
  if (opt.waypoints < 2) throw std::invalid_argument("need at least 2 waypoints");
  cam.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> depth(opt.min_depth_m, opt.max_depth_m);
  const double duration = (n_frames - 1) / rate_hz;
  const double radius = std::sqrt(3.0) * layout.side_m / 2.0;

  for (int attempt = 0; attempt < opt.max_retries; ++attempt) {
    std::vector<Waypoint> w(opt.waypoints);
    for (auto& wp : w) {
      const double z = depth(rng);
      // Keep the cube center far enough from the image border at this depth.
      const double reach_x = std::max(0.0, (std::min(cam.cx, cam.width - cam.cx) - opt.edge_margin_px) * z / cam.fx - radius);
      const double reach_y = std::max(0.0, (std::min(cam.cy, cam.height - cam.cy) - opt.edge_margin_px) * z / cam.fy - radius);
      const double x = std::clamp(unit(rng) * opt.box_m / 2.0, -reach_x, reach_x);
      const double y = std::clamp(unit(rng) * opt.box_m / 2.0, -reach_y, reach_y);
      wp.position = Vec3(x, y, z);
      wp.angles = Vec3(opt.yaw_center_rad + unit(rng) * opt.yaw_range_rad, unit(rng) * opt.tilt_range_rad,
                       unit(rng) * opt.roll_range_rad);
    }
    // Segment duration: at least 2.5 s, stretched until the angular rate bound holds.
    double segment_s = std::max(duration / (opt.waypoints - 1), 2.5);
    const double probe_dt = 0.01;
    double max_rate = 0.0;
    const double span = opt.waypoints - 1;
    for (double tau = 0.0; tau + probe_dt < span; tau += probe_dt) {
      const double ang = rotation_geodesic(evaluate(w, tau), evaluate(w, tau + probe_dt));
      max_rate = std::max(max_rate, ang / (probe_dt * segment_s));
    }
    if (max_rate > opt.max_angular_velocity) segment_s *= 1.05 * max_rate / opt.max_angular_velocity;

    std::vector<Pose> poses;
    poses.reserve(n_frames);
    bool ok = true;
    for (int i = 0; i < n_frames && ok; ++i) {
      const Pose p = evaluate(w, (i / rate_hz) / segment_s);
      ok = pose_valid(layout, cam, p, opt.edge_margin_px, style);
      poses.push_back(p);
    }
    if (ok) return poses;
  }
  throw CubeNotVisible("no valid trajectory after " + std::to_string(opt.max_retries) + " attempts");
}

}  // namespace

std::vector<Pose> sample_trajectory_poses(const CubeLayout& layout, const CameraIntrinsics& cam, int n_frames,
                                          double rate_hz, std::uint64_t seed, const TrajectoryOptions& options,
                                          const SceneStyle& style) {
  return plan_path(layout, cam, n_frames, rate_hz, seed, options, style);
}

SynthSequence generate_trajectory(const CubeLayout& layout, const Dictionary& dict, const CameraIntrinsics& cam,
                                  int n_frames, double rate_hz, const NoiseModel& noise, std::uint64_t seed,
                                  const TrajectoryOptions& options, const SceneStyle& style, bool render_images) {
  noise.validate();
  const std::vector<Pose> poses = plan_path(layout, cam, n_frames, rate_hz, seed, options, style);
  SynthSequence seq;
  seq.rate_hz = rate_hz;
  seq.frames.reserve(poses.size());
  for (int i = 0; i < n_frames; ++i) {
    const double t = i / rate_hz;
    if (render_images) {
      seq.frames.push_back(render_frame(layout, dict, poses[i], cam, noise, i, t, style));
    } else {
      SynthFrame f;
      f.index = i;
      f.t_s = t;
      f.true_pose = poses[i];
      f.observations = simulate_observations(layout, poses[i], cam, noise, i, style);
      seq.frames.push_back(std::move(f));
    }
  }
  return seq;
}

}  // namespace cubetrack
