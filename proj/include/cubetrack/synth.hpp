#pragma once

#include <cstdint>
#include <vector>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/geometry.hpp"
#include "cubetrack/image.hpp"
#include "cubetrack/observation.hpp"

namespace cubetrack {

struct NoiseModel {
  double corner_sigma = 0.0;  ///< px, iid Gaussian per coordinate
  double dropout_prob = 0.0;  ///< chance a visible marker goes unobserved
  int blur_radius = 0;        ///< px, box blur applied to the rendered image
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rendering knobs that are not part of the noise model.
struct SceneStyle {
  std::uint8_t background = 128;
  std::uint8_t plain_face = 200;  ///< shade of the marker-less top and bottom faces
  int supersample = 4;            ///< per-axis samples on pixels straddling an edge
  double min_view_cosine = 0.15;  ///< markers on more oblique faces are not observed
  double min_quad_area = 25.0;    ///< px^2
};

struct SynthFrame {
  int index = 0;
  double t_s = 0.0;
  Pose true_pose;  ///< cube body frame -> camera frame
  GrayImage image;
  std::vector<MarkerObservation> observations;
};

/// Faces whose outward normal points toward the camera under `pose`.
std::vector<int> visible_faces(const CubeLayout& layout, const Pose& pose);
/// Cosine between the outward normal and the direction to the camera.
double face_view_cosine(const CubeLayout& layout, int face, const Pose& pose);

/// Per-frame seed so frames can be rendered in any order.
std::uint64_t frame_seed(std::uint64_t seed, int index);

/// Renders the cube by inverse-homography sampling of each visible face's
/// appearance and emits the projected true corners plus noise, minus dropouts.
/// Throws CubeNotVisible when no marked face faces the camera or the cube is
/// not entirely in front of it.
SynthFrame render_frame(const CubeLayout& layout, const Dictionary& dict, const Pose& pose,
                        const CameraIntrinsics& cam, const NoiseModel& noise, int index = 0, double t_s = 0.0,
                        const SceneStyle& style = {});

/// Observations only (no image), identical to what render_frame produces.
std::vector<MarkerObservation> simulate_observations(const CubeLayout& layout, const Pose& pose,
                                                     const CameraIntrinsics& cam, const NoiseModel& noise,
                                                     int index, const SceneStyle& style = {});

/// `base` with one marked face rendered over it at `pose`: pixels the face
/// does not touch keep their value, partially covered ones blend with it.
/// Throws FaceNotVisible when the face crosses the camera plane.
GrayImage composite_face(const GrayImage& base, const CubeLayout& layout, const FaceAppearance& appearance, int face,
                         const Pose& pose, const CameraIntrinsics& cam, int supersample = 4);

struct TrajectoryOptions {
  int waypoints = 5;
  double box_m = 0.4;  ///< lateral extent of the waypoint box
  double min_depth_m = 0.5;
  double max_depth_m = 1.0;
  double yaw_range_rad = 0.5;  ///< yaw drawn from [yaw_center - range, yaw_center + range]
  double yaw_center_rad = 0.785398163397448;  ///< corner toward the camera, two faces in view
  double tilt_range_rad = 0.3;
  double roll_range_rad = 0.2;
  double max_angular_velocity = 1.0;  ///< rad/s
  double edge_margin_px = 4.0;
  int max_retries = 100;
};

struct SynthSequence {
  double rate_hz = 10.0;
  std::vector<SynthFrame> frames;

  std::vector<Pose> truth() const;
};

/// Smooth random path (Catmull-Rom through random waypoints) keeping the whole
/// cube in frame and at least one marked face visible; frames rendered with
/// per-frame seeds derived from `seed`. Throws std::invalid_argument for
/// n_frames < 2 and CubeNotVisible when no valid path is found.
SynthSequence generate_trajectory(const CubeLayout& layout, const Dictionary& dict, const CameraIntrinsics& cam,
                                  int n_frames, double rate_hz, const NoiseModel& noise, std::uint64_t seed,
                                  const TrajectoryOptions& options = {}, const SceneStyle& style = {},
                                  bool render_images = true);

/// Only the ground-truth poses of generate_trajectory (same seed, same path).
std::vector<Pose> sample_trajectory_poses(const CubeLayout& layout, const CameraIntrinsics& cam, int n_frames,
                                          double rate_hz, std::uint64_t seed, const TrajectoryOptions& options = {},
                                          const SceneStyle& style = {});

/// Default camera used by the synthetic experiments.
CameraIntrinsics default_camera();

}  // namespace cubetrack
