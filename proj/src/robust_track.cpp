#include "cubetrack/robust_track.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>

#include "cubetrack/errors.hpp"

namespace cubetrack {

void PipelineConfig::validate() const {
  if (!(ssim_threshold >= -1.0 && ssim_threshold <= 1.0))
    throw std::invalid_argument("ssim_threshold must lie in [-1, 1]");
  if (ssim_window < 3 || ssim_window % 2 == 0) throw std::invalid_argument("ssim_window must be odd and >= 3");
  if (planar_resolution < 64) throw std::invalid_argument("planar_resolution must be >= 64");
  if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw std::invalid_argument("ssim constants must be positive");
  if (min_faces_for_pose < 1) throw std::invalid_argument("min_faces_for_pose must be >= 1");
  if (!(final_min_view_cosine >= -1.0 && final_min_view_cosine <= 1.0))
    throw std::invalid_argument("final_min_view_cosine must lie in [-1, 1]");
}

const char* to_string(TrackStatus status) {
  switch (status) {
    case TrackStatus::Tracked:
      return "Tracked";
    case TrackStatus::RejectedAllFaces:
      return "RejectedAllFaces";
    case TrackStatus::NoDetections:
      return "NoDetections";
  }
  return "NoDetections";
}

TrackStatus track_status_from_string(const std::string& name) {
  if (name == "Tracked") return TrackStatus::Tracked;
  if (name == "RejectedAllFaces") return TrackStatus::RejectedAllFaces;
  if (name == "NoDetections") return TrackStatus::NoDetections;
  throw std::invalid_argument("unknown track status '" + name + "'");
}

std::vector<Correspondence> correspondences(std::span<const MarkerObservation> obs, const CubeLayout& layout) {
  std::vector<Correspondence> out;
  for (const auto& o : obs) {
    if (!layout.face_of_marker(o.id)) continue;
    const auto pts = marker_corners_3d(layout, o.id);
    for (int k = 0; k < 4; ++k) out.push_back({pts[k], o.corners[k]});
  }
  return out;
}

Pose estimate_initial_pose(std::span<const MarkerObservation> obs, const CubeLayout& layout,
                           const CameraIntrinsics& cam) {
  const auto corrs = correspondences(obs, layout);
  if (corrs.empty()) throw InitialPoseFailed("no observation of a known marker");
  try {
    return solve_pnp(corrs, cam).pose;
  } catch (const DegenerateGeometry& e) {
    throw InitialPoseFailed(e.what());
  } catch (const DivergedSolution& e) {
    throw InitialPoseFailed(e.what());
  }
}

PlanarView warp_face(const GrayImage& image, const Pose& pose, const CubeLayout& layout, int face,
                     const CameraIntrinsics& cam, int resolution) {
  const FaceLayout& f = layout.face(face);
  const Vec3 center_cam = pose.apply(f.center);
  const Vec3 normal_cam = pose.rotation * f.normal;
  if (!(normal_cam.dot(center_cam) < 0.0)) throw FaceNotVisible("face " + std::to_string(face));
  const auto corners = layout.face_corners(face);
  std::array<Vec2, 4> img, tpl;
  const double h = layout.side_m / 2.0;
  const std::array<Vec2, 4> uv = {Vec2(-h, h), Vec2(-h, -h), Vec2(h, -h), Vec2(h, h)};
  for (int k = 0; k < 4; ++k) {
    const Vec3 pc = pose.apply(corners[k]);
    if (pc.z() <= 1e-6) throw FaceNotVisible("face " + std::to_string(face) + " crosses the camera plane");
    img[k] = project_pinhole(pc, cam);
    tpl[k] = face_to_template(layout, uv[k].x(), uv[k].y(), resolution);
  }
  PlanarView view;
  try {
    view.homography = solve_homography(img, tpl);
  } catch (const DegenerateConfiguration& e) {
    throw FaceNotVisible(std::string("face projects to a degenerate quad: ") + e.what());
  }
  view.image = rectify(image, view.homography, cam, resolution);
  return view;
}

GrayImage rectify(const GrayImage& image, const Homography& h, const CameraIntrinsics& cam, int resolution) {
  GrayImage out(resolution, resolution, 0);
  const Mat3 inv = h.inverse().matrix();
  const bool distorted = cam.has_distortion();
  const int w = image.width, hgt = image.height;
  const std::uint8_t* src = image.pixels.data();
  for (int y = 0; y < resolution; ++y) {
    double px = inv(0, 1) * y + inv(0, 2), py = inv(1, 1) * y + inv(1, 2), pz = inv(2, 1) * y + inv(2, 2);
    std::uint8_t* row = out.pixels.data() + static_cast<std::size_t>(y) * resolution;
    for (int x = 0; x < resolution; ++x, px += inv(0, 0), py += inv(1, 0), pz += inv(2, 0)) {
      const double iz = 1.0 / pz;
      double sx = px * iz, sy = py * iz;
      if (distorted) {
        const Vec2 d = cam.distort_pixel({sx, sy});
        sx = d.x();
        sy = d.y();
      }
      double v;
      if (sx >= 0.0 && sy >= 0.0 && sx < w - 1 && sy < hgt - 1) {
        const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
        const double fx = sx - x0, fy = sy - y0;
        const std::uint8_t* q = src + static_cast<std::size_t>(y0) * w + x0;
        const double top = q[0] + (q[1] - q[0]) * fx;
        const double bottom = q[w] + (q[w + 1] - q[w]) * fx;
        v = top + (bottom - top) * fy;
      } else {
        v = image.sample_bilinear_clamped(sx, sy);
      }
      row[x] = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
    }
  }
  return out;
}

GrayImage expected_planar_view(const GrayImage& image, const Pose& pose, const CubeLayout& layout,
                               const Dictionary& dict, int face, const CameraIntrinsics& cam, const Homography& h,
                               int resolution) {
  const FaceAppearance appearance(layout, dict, face);
  return rectify(composite_face(image, layout, appearance, face, pose, cam, 2), h, cam, resolution);
}

double ssim(const GrayImage& a, const GrayImage& b, const PipelineConfig& config) {
  if (a.width != b.width || a.height != b.height)
    throw SizeMismatch(std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) +
                       "x" + std::to_string(b.height));
  const int win = config.ssim_window;
  if (a.width < win || a.height < win) throw SizeMismatch("image smaller than the SSIM window");
  const int w = a.width, h = a.height;
  // Window sums of a, b, a^2, b^2 and ab in exact integers: horizontal
  // sliding sums per row, then a vertical sliding sum over rows.
  const int ow = w - win + 1, oh = h - win + 1;
  std::vector<std::array<std::int32_t, 5>> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* pa = a.pixels.data() + static_cast<std::size_t>(y) * w;
    const std::uint8_t* pb = b.pixels.data() + static_cast<std::size_t>(y) * w;
    std::array<std::int32_t, 5> acc{0, 0, 0, 0, 0};
    auto add = [&](int x, int sign) {
      const std::int32_t va = pa[x], vb = pb[x];
      acc[0] += sign * va;
      acc[1] += sign * vb;
      acc[2] += sign * va * va;
      acc[3] += sign * vb * vb;
      acc[4] += sign * va * vb;
    };
    for (int x = 0; x < win; ++x) add(x, 1);
    auto* out = rows.data() + static_cast<std::size_t>(y) * ow;
    out[0] = acc;
    for (int x = 1; x < ow; ++x) {
      add(x - 1, -1);
      add(x + win - 1, 1);
      out[x] = acc;
    }
  }
  std::vector<std::array<std::int32_t, 5>> col(ow, {0, 0, 0, 0, 0});
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < ow; ++x)
      for (int k = 0; k < 5; ++k) col[x][k] += rows[static_cast<std::size_t>(y) * ow + x][k];
  const double inv_n = 1.0 / (static_cast<double>(win) * win);
  const double c1 = config.ssim_c1, c2 = config.ssim_c2;
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    if (y > 0) {
      const auto* leave = rows.data() + static_cast<std::size_t>(y - 1) * ow;
      const auto* enter = rows.data() + static_cast<std::size_t>(y + win - 1) * ow;
      for (int x = 0; x < ow; ++x)
        for (int k = 0; k < 5; ++k) col[x][k] += enter[x][k] - leave[x][k];
    }
    for (int x = 0; x < ow; ++x) {
      const double ma = col[x][0] * inv_n, mb = col[x][1] * inv_n;
      const double va = std::max(0.0, col[x][2] * inv_n - ma * ma);
      const double vb = std::max(0.0, col[x][3] * inv_n - mb * mb);
      const double cov = col[x][4] * inv_n - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / (static_cast<double>(ow) * oh);
}

std::vector<MarkerObservation> refine_on_planar(const GrayImage& planar, const Dictionary& dict,
                                                const PipelineConfig& config) {
  auto found = detect_markers(planar, dict, config.detector);
  if (config.subpixel_refine) {
    for (auto& o : found) {
      for (auto& c : o.corners) {
        try {
          c = refine_corner_subpixel(planar, c);
        } catch (const NearBorder&) {
        }
      }
    }
  }
  return found;
}

std::vector<MarkerObservation> unwarp_corners(std::span<const MarkerObservation> planar_obs, const Homography& h) {
  std::vector<MarkerObservation> out;
  if (planar_obs.empty()) return out;
  const Homography inv = h.inverse();
  out.reserve(planar_obs.size());
  for (const auto& o : planar_obs) {
    MarkerObservation m{o.id, {}};
    for (int k = 0; k < 4; ++k) m.corners[k] = inv.apply(o.corners[k]);
    out.push_back(m);
  }
  return out;
}

std::vector<MarkerObservation> unwarp_corners(std::span<const MarkerObservation> planar_obs, const Homography& h,
                                              const CameraIntrinsics& cam) {
  auto out = unwarp_corners(planar_obs, h);
  if (cam.has_distortion())
    for (auto& o : out)
      for (auto& c : o.corners) c = cam.distort_pixel(c);
  return out;
}

Tracker::Tracker(CubeLayout layout, Dictionary dict, CameraIntrinsics cam, PipelineConfig config)
    : layout_(std::move(layout)), dict_(std::move(dict)), cam_(cam), config_(config) {
  config_.validate();
  cam_.validate();
  for (const auto& f : layout_.faces) templates_.push_back(render_template(layout_, dict_, f.face, config_.planar_resolution));
}

const GrayImage& Tracker::face_template(int face) const {
  for (const auto& t : templates_)
    if (t.face == face) return t.image;
  throw std::out_of_range("no template for face " + std::to_string(face));
}

FrameResult Tracker::track_frame(const GrayImage& image, std::span<const MarkerObservation> obs, int frame) const {
  FrameResult result;
  result.frame = frame;

  // Initial pose from all observations
  Pose initial;
  try {
    initial = estimate_initial_pose(obs, layout_, cam_);
  } catch (const InitialPoseFailed&) {
    result.status = TrackStatus::NoDetections;
    return result;
  }
  result.initial_pose = initial;

  std::set<int> observed_faces;
  for (const auto& o : obs)
    if (auto f = layout_.face_of_marker(o.id)) observed_faces.insert(*f);

  // Accepted faces with the markers they contribute and their view cosine.
  struct Contribution {
    std::size_t result_index;
    double view_cosine;
    std::vector<MarkerObservation> markers;
  };
  std::vector<Contribution> contributions;
  for (int face : observed_faces) {
    // Rectify the face
    PlanarView view;
    try {
      view = warp_face(image, initial, layout_, face, cam_, config_.planar_resolution);
    } catch (const FaceNotVisible&) {
      continue;
    }
    // Appearance gate
    FaceResult fr;
    fr.face = face;
    if (config_.rendered_reference) {
      const GrayImage expected =
          expected_planar_view(image, initial, layout_, dict_, face, cam_, view.homography, config_.planar_resolution);
      fr.ssim = ssim(view.image, expected, config_);
    } else {
      fr.ssim = ssim(view.image, face_template(face), config_);
    }
    fr.accepted = fr.ssim >= config_.ssim_threshold;
    if (fr.accepted) {
      // Re-detect on the planar view and map the corners back
      std::vector<MarkerObservation> planar;
      for (const auto& o : refine_on_planar(view.image, dict_, config_))
        if (layout_.face_of_marker(o.id) == face) planar.push_back(o);
      fr.refined_obs = unwarp_corners(planar, view.homography, cam_);
      std::vector<MarkerObservation> used = fr.refined_obs;
      if (config_.keep_unrefined_markers) {
        for (const auto& o : obs) {
          if (layout_.face_of_marker(o.id) != face) continue;
          const bool have = std::any_of(used.begin(), used.end(), [&](const auto& r) { return r.id == o.id; });
          if (!have) used.push_back(o);
        }
      }
      if (!used.empty())
        contributions.push_back({result.faces.size(), face_view_cosine(layout_, face, initial), std::move(used)});
    }
    result.faces.push_back(std::move(fr));
  }

  // Final solve over the trusted faces
  if (static_cast<int>(contributions.size()) < config_.min_faces_for_pose) {
    result.status = TrackStatus::RejectedAllFaces;
    return result;
  }
  double best_cosine = -1.0;
  for (const auto& c : contributions) best_cosine = std::max(best_cosine, c.view_cosine);
  std::vector<MarkerObservation> trusted;
  for (const auto& c : contributions) {
    if (c.view_cosine < config_.final_min_view_cosine && c.view_cosine < best_cosine) continue;
    result.faces[c.result_index].in_final_solve = true;
    trusted.insert(trusted.end(), c.markers.begin(), c.markers.end());
  }
  try {
    const auto corrs = correspondences(trusted, layout_);
    PnpSolution best = solve_pnp(corrs, cam_, initial);
    try {
      const PnpSolution fresh = solve_pnp(corrs, cam_);
      if (fresh.rmse < best.rmse) best = fresh;
    } catch (const Error&) {
    }
    result.final_pose = best.pose;
    result.status = TrackStatus::Tracked;
  } catch (const Error&) {
    result.status = TrackStatus::RejectedAllFaces;
  }
  return result;
}

std::vector<FrameResult> Tracker::track_sequence(std::span<const SynthFrame> frames, int threads) const {
  std::vector<FrameResult> out(frames.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(frames.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < frames.size(); ++i)
      out[i] = track_frame(frames[i].image, frames[i].observations, frames[i].index);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < frames.size(); i = next++)
        out[i] = track_frame(frames[i].image, frames[i].observations, frames[i].index);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

FrameResult track_frame(const GrayImage& image, std::span<const MarkerObservation> obs, const CubeLayout& layout,
                        const Dictionary& dict, const CameraIntrinsics& cam, const PipelineConfig& config) {
  return Tracker(layout, dict, cam, config).track_frame(image, obs);
}

}  // namespace cubetrack
