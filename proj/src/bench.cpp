#include "cubetrack/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "cubetrack/detect.hpp"

namespace cubetrack {

void BenchConfig::validate() const {
  if (frames < 2) throw std::invalid_argument("need at least two frames");
  if (seeds < 1) throw std::invalid_argument("need at least one seed");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be non-negative");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate must be positive");
  if (threads < 1) throw std::invalid_argument("threads must be positive");
  camera.validate();
  pipeline.validate();
  NoiseModel{sigma, dropout, blur_radius, 0}.validate();
}

SeedReport run_bench_seed(const BenchConfig& config, std::uint64_t seed, const CubeLayout& layout,
                          const Dictionary& dict) {
  config.validate();
  const std::vector<Pose> poses =
      sample_trajectory_poses(layout, config.camera, config.frames, config.rate_hz, seed, config.trajectory);
  const NoiseModel noise{config.sigma, config.dropout, config.blur_radius, seed};
  const Tracker tracker(layout, dict, config.camera, config.pipeline);

  SeedReport report;
  report.seed = seed;
  report.frames.resize(poses.size());
  auto run = [&](std::size_t i) {
    const int index = static_cast<int>(i);
    const SynthFrame f = render_frame(layout, dict, poses[i], config.camera, noise, index, index / config.rate_hz);
    const FrameResult r = config.detect ? tracker.track_frame(f.image, detect_markers(f.image, dict), index)
                                        : tracker.track_frame(f.image, f.observations, index);
    report.frames[i] = {index, f.t_s, f.true_pose, r.status, r.initial_pose, r.final_pose};
  };
  const int workers = std::min<int>(config.threads, static_cast<int>(poses.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < poses.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < poses.size(); i = next++) run(i);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<Pose> truth, raw, refined;
  for (const auto& f : report.frames) {
    if (f.status == TrackStatus::Tracked) ++report.tracked;
    if (f.raw && f.refined) {
      truth.push_back(f.truth);
      raw.push_back(*f.raw);
      refined.push_back(*f.refined);
    }
  }
  report.tracked_fraction = static_cast<double>(report.tracked) / static_cast<double>(report.frames.size());
  if (truth.size() < 2) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.mse_position_raw = report.mse_position_refined = nan;
    report.mse_rotation_raw_per_axis = report.mse_rotation_refined_per_axis = nan;
    report.mse_rotation_raw_geodesic = report.mse_rotation_refined_geodesic = nan;
    return report;
  }
  const Episode et = episode_from_poses("truth", truth, config.rate_hz);
  const Episode er = episode_from_poses("raw", raw, config.rate_hz);
  const Episode ef = episode_from_poses("refined", refined, config.rate_hz);
  report.mse_position_raw = mse_position(er, et);
  report.mse_position_refined = mse_position(ef, et);
  report.mse_rotation_raw_per_axis = mse_rotation(er, et, RotationConvention::PerAxis);
  report.mse_rotation_refined_per_axis = mse_rotation(ef, et, RotationConvention::PerAxis);
  report.mse_rotation_raw_geodesic = mse_rotation(er, et, RotationConvention::Geodesic);
  report.mse_rotation_refined_geodesic = mse_rotation(ef, et, RotationConvention::Geodesic);
  return report;
}

BenchSummary summarize(const std::vector<SeedReport>& reports) {
  BenchSummary s;
  s.seeds = static_cast<int>(reports.size());
  if (reports.empty()) return s;
  for (const auto& r : reports) {
    s.tracked_fraction += r.tracked_fraction;
    s.mse_position_raw += r.mse_position_raw;
    s.mse_position_refined += r.mse_position_refined;
    s.mse_rotation_raw_per_axis += r.mse_rotation_raw_per_axis;
    s.mse_rotation_refined_per_axis += r.mse_rotation_refined_per_axis;
    s.mse_rotation_raw_geodesic += r.mse_rotation_raw_geodesic;
    s.mse_rotation_refined_geodesic += r.mse_rotation_refined_geodesic;
  }
  const double n = static_cast<double>(reports.size());
  s.tracked_fraction /= n;
  s.mse_position_raw /= n;
  s.mse_position_refined /= n;
  s.mse_rotation_raw_per_axis /= n;
  s.mse_rotation_refined_per_axis /= n;
  s.mse_rotation_raw_geodesic /= n;
  s.mse_rotation_refined_geodesic /= n;
  return s;
}

}  // namespace cubetrack
