#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cubetrack/bench.hpp"
#include "cubetrack/cube_model.hpp"
#include "cubetrack/ddpm.hpp"
#include "cubetrack/detect.hpp"
#include "cubetrack/errors.hpp"
#include "cubetrack/geometry.hpp"
#include "cubetrack/pnp.hpp"
#include "cubetrack/robust_track.hpp"
#include "cubetrack/synth.hpp"
#include "cubetrack/trajectory.hpp"

using namespace cubetrack;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("[%s] %s %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
}

/// Mean displacement of the eight cube vertices between two poses.
double vertex_error(const Pose& a, const Pose& b, double side) {
  double sum = 0.0;
  for (int i = 0; i < 8; ++i) {
    const Vec3 v((i & 1 ? 0.5 : -0.5) * side, (i & 2 ? 0.5 : -0.5) * side, (i & 4 ? 0.5 : -0.5) * side);
    sum += (a * v - b * v).norm();
  }
  return sum / 8.0;
}

// 1 ----------------------------------------------------------------------

void classifier_arithmetic() {
  const ConfusionCounts c{54, 22, 15, 123};
  const ClassifierMetrics m = classifier_metrics(c);
  const double expect[4] = {0.82710, 0.71053, 0.78261, 0.74483};
  const char* rounded[4] = {"0.83", "0.71", "0.78", "0.74"};
  const std::optional<double> got[4] = {m.accuracy, m.precision, m.recall, m.f1};
  bool pass = true;
  std::string detail;
  for (int i = 0; i < 4; ++i) {
    const bool ok = got[i] && std::abs(*got[i] - expect[i]) <= 5e-6 && fmt("%.2f", *got[i]) == rounded[i];
    pass = pass && ok;
    detail += fmt("%s%.5f", i ? " / " : "", got[i].value_or(NAN));
  }
  report("1", pass, "classifier metrics (54, 22, 15, 123): " + detail + " (accuracy / precision / recall / f1)");
}

// 2 ----------------------------------------------------------------------

void noise_reduction_benchmark() {
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(static_cast<int>(layout.marker_ids().size()), kDefaultDictionarySeed);
  BenchConfig cfg;
  cfg.frames = 500;
  cfg.sigma = 2.0;
  cfg.seeds = 20;
  cfg.threads = worker_count();
  const auto t0 = Clock::now();
  std::vector<SeedReport> reports;
  for (int s = 0; s < cfg.seeds; ++s) {
    SeedReport r = run_bench_seed(cfg, cfg.first_seed + s, layout, dict);
    r.frames.clear();
    reports.push_back(std::move(r));
  }
  const double elapsed = seconds_since(t0);
  const BenchSummary sum = summarize(reports);
  const bool pass = sum.position_ratio() <= 0.1 && sum.rotation_ratio_per_axis() <= 0.15;
  report("2", pass,
         fmt("20 seeds x 500 frames, sigma 2 px: position MSE raw %.3e -> refined %.3e (ratio %.2e <= 0.1), "
             "per-axis rotation MSE raw %.3e -> refined %.3e (ratio %.2e <= 0.15), geodesic ratio %.2e, "
             "tracked fraction %.4f",
             sum.mse_position_raw, sum.mse_position_refined, sum.position_ratio(), sum.mse_rotation_raw_per_axis,
             sum.mse_rotation_refined_per_axis, sum.rotation_ratio_per_axis(), sum.rotation_ratio_geodesic(),
             sum.tracked_fraction));
  std::printf("[%s] 2-runtime %.1f s on %d worker thread(s) (target < 60 s)\n",
              elapsed < 60.0 ? "MET" : "TARGET MISSED", elapsed, cfg.threads);
}

// 3 ----------------------------------------------------------------------

/// Overwrites the projected face with uniform noise.
void corrupt_face(GrayImage& image, const CubeLayout& layout, int face, const Pose& pose, const CameraIntrinsics& cam,
                  std::mt19937_64& rng) {
  std::array<Vec2, 4> quad;
  const auto corners = layout.face_corners(face);
  for (int i = 0; i < 4; ++i) quad[i] = project_point(pose * corners[i], cam);
  double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
  for (const auto& p : quad) {
    x0 = std::min(x0, p.x());
    y0 = std::min(y0, p.y());
    x1 = std::max(x1, p.x());
    y1 = std::max(y1, p.y());
  }
  const double orient = cross2(quad[0], quad[1], quad[2]) > 0 ? 1.0 : -1.0;
  std::uniform_int_distribution<int> value(0, 255);
  for (int y = std::max(0, int(std::floor(y0))); y <= std::min(image.height - 1, int(std::ceil(y1))); ++y)
    for (int x = std::max(0, int(std::floor(x0))); x <= std::min(image.width - 1, int(std::ceil(x1))); ++x) {
      const Vec2 p(x, y);
      bool inside = true;
      for (int i = 0; i < 4 && inside; ++i) inside = orient * cross2(quad[i], quad[(i + 1) % 4], p) >= 0.0;
      if (inside) image.at(x, y) = static_cast<std::uint8_t>(value(rng));
    }
}

void corruption_gate() {
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(static_cast<int>(layout.marker_ids().size()), kDefaultDictionarySeed);
  const CameraIntrinsics cam = default_camera();
  PipelineConfig ungated_cfg;
  ungated_cfg.ssim_threshold = -1.0;
  ungated_cfg.keep_unrefined_markers = true;
  ungated_cfg.final_min_view_cosine = -1.0;
  const Tracker gated(layout, dict, cam);
  const Tracker ungated(layout, dict, cam, ungated_cfg);

  int frames = 0, low_ssim = 0, better = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const NoiseModel noise{2.0, 0.0, 0, seed};
    const std::vector<Pose> poses = sample_trajectory_poses(layout, cam, 100, 10.0, seed);
    std::mt19937_64 rng(seed * 7919);
    for (int i = 0; i < 100; ++i) {
      SynthFrame f = render_frame(layout, dict, poses[i], cam, noise, i, i / 10.0);
      std::vector<int> observed;
      for (const auto& o : f.observations) {
        const int face = *layout.face_of_marker(o.id);
        if (std::find(observed.begin(), observed.end(), face) == observed.end()) observed.push_back(face);
      }
      std::sort(observed.begin(), observed.end());
      const int bad_face = observed[std::uniform_int_distribution<std::size_t>(0, observed.size() - 1)(rng)];
      corrupt_face(f.image, layout, bad_face, f.true_pose, cam, rng);

      const FrameResult g = gated.track_frame(f.image, f.observations, i);
      const FrameResult u = ungated.track_frame(f.image, f.observations, i);
      ++frames;
      for (const auto& fr : g.faces)
        if (fr.face == bad_face && fr.ssim < 0.5) ++low_ssim;
      if (g.final_pose && u.final_pose &&
          vertex_error(*g.final_pose, f.true_pose, layout.side_m) < vertex_error(*u.final_pose, f.true_pose, layout.side_m))
        ++better;
      else if (g.final_pose && !u.final_pose)
        ++better;
    }
  }
  const double low_frac = static_cast<double>(low_ssim) / frames;
  const double better_frac = static_cast<double>(better) / frames;
  report("3", low_frac >= 0.95 && better_frac >= 0.90,
         fmt("5 seeds x 100 frames, one face per frame replaced by uniform noise: corrupted-face SSIM < 0.5 in %.1f%% "
             "(>= 95%%), gated pose closer to truth than ungated in %.1f%% (>= 90%%)",
             100.0 * low_frac, 100.0 * better_frac));
}

// 4 ----------------------------------------------------------------------

void noiseless_end_to_end() {
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(static_cast<int>(layout.marker_ids().size()), kDefaultDictionarySeed);
  const CameraIntrinsics cam = default_camera();
  const Tracker tracker(layout, dict, cam);
  const std::vector<Pose> poses = sample_trajectory_poses(layout, cam, 100, 10.0, 1);
  int not_tracked = 0;
  double max_t = 0.0, max_r = 0.0;
  for (int i = 0; i < 100; ++i) {
    const SynthFrame f = render_frame(layout, dict, poses[i], cam, NoiseModel{}, i, i / 10.0);
    const FrameResult r = tracker.track_frame(f.image, detect_markers(f.image, dict), i);
    if (r.status != TrackStatus::Tracked) {
      ++not_tracked;
      continue;
    }
    max_t = std::max(max_t, (r.final_pose->translation - f.true_pose.translation).norm());
    max_r = std::max(max_r, rotation_geodesic(*r.final_pose, f.true_pose));
  }
  report("4", not_tracked == 0 && max_t <= 1e-3 && max_r <= 1e-3,
         fmt("render -> detect -> pipeline over 100 noiseless frames: %d not tracked, max error %.2e m (<= 1e-3), "
             "%.2e rad (<= 1e-3)",
             not_tracked, max_t, max_r));
}

// 5 ----------------------------------------------------------------------

void pnp_gradient_check() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    CameraIntrinsics cam = default_camera();
    cam.fx = 600.0 + 400.0 * std::abs(u(rng));
    cam.fy = cam.fx * (1.0 + 0.05 * u(rng));
    Pose pose(so3_exp(Vec3(u(rng), u(rng), u(rng))), Vec3(0.2 * u(rng), 0.2 * u(rng), 1.0 + 0.5 * std::abs(u(rng))));
    std::vector<Correspondence> corrs;
    for (int i = 0; i < 8; ++i) {
      const Vec3 x(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
      corrs.push_back({x, project_point(pose * x, cam) + Vec2(u(rng), u(rng))});
    }
    const Eigen::MatrixXd j = reprojection_jacobian(pose, corrs, cam);
    Eigen::MatrixXd fd(j.rows(), 6);
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Vector6d d = Vector6d::Zero();
      d[k] = h;
      fd.col(k) = (reprojection_residuals(apply_increment(pose, d), corrs, cam) -
                   reprojection_residuals(apply_increment(pose, -d), corrs, cam)) /
                  (2.0 * h);
    }
    worst = std::max(worst, (j - fd).norm() / fd.norm());
  }
  report("5", worst < 1e-4,
         fmt("reprojection Jacobian vs central differences at 100 random configurations: worst relative error %.2e "
             "(< 1e-4)",
             worst));
}

// 6 ----------------------------------------------------------------------

void ddpm_suite() {
  using namespace cubetrack::ddpm;
  const auto t0 = Clock::now();
  const DenoiseSchedule schedule = DenoiseSchedule::linear();

  // (a)
  const FunctionModel zero(2, 2, [](const Vector&, const Vector& a, int) { return Vector::Zero(a.size()); });
  std::vector<double> sig0(schedule.steps(), 0.0);
  const DenoiseSchedule quiet =
      DenoiseSchedule::from_coefficients(schedule.alpha, schedule.gamma, sig0, schedule.alpha_bar);
  Rng rng(1);
  bool exact = true;
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + trial % schedule.steps();
    Vector a(2);
    a << n(rng), n(rng);
    const Vector out = denoise_step(a, k, Vector::Zero(2), zero, quiet, rng);
    exact = exact && out == Vector(schedule.alpha[k - 1] * a);
  }

  // (b)
  Vector point(2);
  point << 0.3, -0.2;
  std::vector<Example> delta(2048, Example{Vector::Zero(2), point});
  TrainConfig cfg;
  cfg.seed = 11;
  const TrainResult delta_model = train_toy_policy(delta, schedule, cfg);
  Rng srng(12);
  int near = 0;
  for (int i = 0; i < 1000; ++i)
    if ((sample(Vector::Zero(2), delta_model.model, schedule, srng) - point).norm() <= 0.15) ++near;

  // (c)
  std::vector<Example> bimodal;
  Vector left(2), right(2);
  left << -1.0, 0.0;
  right << 1.0, 0.0;
  for (int i = 0; i < 2048; ++i) bimodal.push_back({Vector::Zero(2), i % 2 ? right : left});
  cfg.seed = 13;
  const TrainResult bimodal_model = train_toy_policy(bimodal, schedule, cfg);
  std::vector<Vector> draws;
  for (int i = 0; i < 1000; ++i) draws.push_back(sample(Vector::Zero(2), bimodal_model.model, schedule, srng));
  const BimodalityReport rep = bimodality_report(draws, left, right);
  const double elapsed = seconds_since(t0);

  const bool pass = exact && near >= 950 && rep.passed && elapsed < 120.0;
  report("6", pass,
         fmt("(a) zero model, sigma 0: output == alpha * input in %s of 1000 cases; (b) point recovery %d/1000 within "
             "0.15 (>= 950); (c) clusters %.1f%% / %.1f%% (>= 30%% each), center errors %.3f / %.3f (<= 0.25); "
             "runtime %.1f s (< 120 s)",
             exact ? "all" : "not all", near, 100.0 * rep.fraction[0], 100.0 * rep.fraction[1], rep.center_error[0],
             rep.center_error[1], elapsed));
}

// 7 ----------------------------------------------------------------------

void property_suites() {
  constexpr int kCases = 1000;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  // Homography warp then unwarp, for template-to-image maps of a square face
  // seen by the default camera from random poses.
  const CameraIntrinsics cam = default_camera();
  double worst_px = 0.0;
  int homographies = 0;
  while (homographies < kCases) {
    const Vec3 axis = Vec3(u(rng), u(rng), 0.0).normalized();
    const double tilt = 1.3 * std::abs(u(rng));
    const Pose pose(so3_exp(Vec3(0, 0, M_PI * u(rng))) * so3_exp(axis * tilt),
                    Vec3(0.3 * u(rng), 0.2 * u(rng), 0.4 + 1.2 * std::abs(u(rng))));
    const double half = 0.045;
    const std::array<Vec3, 4> corners = {Vec3(-half, -half, 0), Vec3(-half, half, 0), Vec3(half, half, 0),
                                         Vec3(half, -half, 0)};
    const std::array<Vec2, 4> src = {Vec2(0, 0), Vec2(0, 255), Vec2(255, 255), Vec2(255, 0)};
    std::array<Vec2, 4> dst;
    bool usable = true;
    for (int i = 0; i < 4; ++i) {
      const Vec3 pc = pose * corners[i];
      usable = usable && pc.z() > 0.1;
      dst[i] = project_pinhole(pc, cam);
      usable = usable && cam.contains(dst[i]);
    }
    if (!usable || !is_strictly_convex(dst)) continue;
    const Homography h = solve_homography(src, dst);
    const Homography inv = h.inverse();
    for (int k = 0; k < 10; ++k) {
      const Vec2 p(128 + 128 * u(rng), 128 + 128 * u(rng));
      worst_px = std::max(worst_px, (inv(h(p)) - p).norm());
      const Vec2 q = h(p);
      worst_px = std::max(worst_px, (h(inv(q)) - q).norm());
    }
    ++homographies;
  }
  report("7a", worst_px <= 1e-9,
         fmt("homography warp/unwarp over %d random face-to-image maps: worst round-trip error %.2e px (<= 1e-9)", homographies,
             worst_px));

  // MSE symmetry and quaternion sign invariance.
  double worst_asym = 0.0, worst_sign = 0.0;
  for (int c = 0; c < kCases; ++c) {
    Episode a, b;
    const int n = 2 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      a.samples.push_back({i / 10.0, {random_quat(rng), Vec3(u(rng), u(rng), u(rng))}, 0.0});
      b.samples.push_back({i / 10.0 + 0.04 * u(rng), {random_quat(rng), Vec3(u(rng), u(rng), u(rng))}, 0.0});
    }
    auto rel = [](double x, double y) { return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-300}); };
    worst_asym = std::max({worst_asym, rel(mse_position(a, b), mse_position(b, a)),
                           rel(mse_rotation(a, b, RotationConvention::PerAxis),
                               mse_rotation(b, a, RotationConvention::PerAxis)),
                           rel(mse_rotation(a, b, RotationConvention::Geodesic),
                               mse_rotation(b, a, RotationConvention::Geodesic))});
    Episode flipped = a;
    for (auto& s : flipped.samples)
      if (rng() & 1) s.pose.rotation.coeffs() = -s.pose.rotation.coeffs();
    worst_sign = std::max({worst_sign,
                           rel(mse_rotation(a, b, RotationConvention::PerAxis),
                               mse_rotation(flipped, b, RotationConvention::PerAxis)),
                           rel(mse_rotation(a, b, RotationConvention::Geodesic),
                               mse_rotation(flipped, b, RotationConvention::Geodesic))});
  }
  report("7b", worst_asym <= 1e-12,
         fmt("MSE symmetry over %d random episode pairs (position, per-axis, geodesic): worst relative "
             "difference %.2e",
             kCases, worst_asym));
  report("7c", worst_sign <= 1e-12,
         fmt("rotation MSE under random quaternion sign flips over %d pairs: worst relative difference %.2e", kCases,
             worst_sign));

  // Dictionary distance, exhaustively over every pair and rotation.
  const Dictionary dict = generate_dictionary(kMaxDictionarySize, kDefaultDictionarySeed);
  int min_distance = 16;
  long checks = 0;
  for (std::size_t i = 0; i < dict.size(); ++i) {
    const PayloadCode a = dict.patterns()[i].code;
    for (int r = 1; r < 4; ++r, ++checks) min_distance = std::min(min_distance, hamming(a, rotate_code(a, r)));
    for (std::size_t j = i + 1; j < dict.size(); ++j)
      for (int r = 0; r < 4; ++r, ++checks)
        min_distance = std::min(min_distance, hamming(a, rotate_code(dict.patterns()[j].code, r)));
  }
  report("7d", min_distance >= 4 && checks >= kCases,
         fmt("dictionary of %zu markers: minimum Hamming distance %d over %ld rotation-aware comparisons (>= 4)",
             dict.size(), min_distance, checks));
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const char* id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  try {
    if (wanted("1")) classifier_arithmetic();
    if (wanted("2")) noise_reduction_benchmark();
    if (wanted("3")) corruption_gate();
    if (wanted("4")) noiseless_end_to_end();
    if (wanted("5")) pnp_gradient_check();
    if (wanted("6")) ddpm_suite();
    if (wanted("7")) property_suites();
  } catch (const std::exception& e) {
    std::printf("[FAIL] unexpected exception: %s\n", e.what());
    return 1;
  }
  std::printf("%d failing criteria\n", failures);
  return failures == 0 ? 0 : 1;
}
