#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cubetrack/geometry.hpp"
#include "cubetrack/robust_track.hpp"
#include "cubetrack/synth.hpp"
#include "cubetrack/trajectory.hpp"

namespace cubetrack {

/// Synthetic comparison of raw PnP (step 1 alone) against the full pipeline.
struct BenchConfig {
  int frames = 500;
  double sigma = 2.0;  ///< corner noise, px
  int seeds = 20;
  std::uint64_t first_seed = 1;
  double rate_hz = 10.0;
  double dropout = 0.0;
  int blur_radius = 0;
  int threads = 1;
  /// Markers found by the detector in the rendered image instead of the
  /// simulated (noisy) corner observations.
  bool detect = false;
  CameraIntrinsics camera;
  TrajectoryOptions trajectory;
  PipelineConfig pipeline;

  /// Throws std::invalid_argument.
  void validate() const;
};

struct BenchFrame {
  int frame = 0;
  double t_s = 0.0;
  Pose truth;
  TrackStatus status = TrackStatus::NoDetections;
  std::optional<Pose> raw;      ///< step-1 PnP pose
  std::optional<Pose> refined;  ///< pipeline pose, present iff Tracked
};

struct SeedReport {
  std::uint64_t seed = 0;
  std::vector<BenchFrame> frames;
  int tracked = 0;
  double tracked_fraction = 0.0;
  /// Over the frames where both poses exist; NaN when there are fewer than two.
  double mse_position_raw = 0.0;
  double mse_position_refined = 0.0;
  double mse_rotation_raw_per_axis = 0.0;
  double mse_rotation_refined_per_axis = 0.0;
  double mse_rotation_raw_geodesic = 0.0;
  double mse_rotation_refined_geodesic = 0.0;
};

/// Renders one seeded sequence frame by frame (spread over `threads` workers)
/// and tracks it; identical output for any thread count.
SeedReport run_bench_seed(const BenchConfig& config, std::uint64_t seed, const CubeLayout& layout,
                          const Dictionary& dict);

struct BenchSummary {
  int seeds = 0;
  double tracked_fraction = 0.0;
  double mse_position_raw = 0.0;
  double mse_position_refined = 0.0;
  double mse_rotation_raw_per_axis = 0.0;
  double mse_rotation_refined_per_axis = 0.0;
  double mse_rotation_raw_geodesic = 0.0;
  double mse_rotation_refined_geodesic = 0.0;

  double position_ratio() const { return mse_position_refined / mse_position_raw; }
  double rotation_ratio_per_axis() const { return mse_rotation_refined_per_axis / mse_rotation_raw_per_axis; }
  double rotation_ratio_geodesic() const { return mse_rotation_refined_geodesic / mse_rotation_raw_geodesic; }
};

/// Means over seeds.
BenchSummary summarize(const std::vector<SeedReport>& reports);

}  // namespace cubetrack
