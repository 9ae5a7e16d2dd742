#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/detect.hpp"
#include "cubetrack/geometry.hpp"
#include "cubetrack/image.hpp"
#include "cubetrack/observation.hpp"
#include "cubetrack/pnp.hpp"
#include "cubetrack/synth.hpp"

namespace cubetrack {

struct PipelineConfig {
  double ssim_threshold = 0.5;
  int planar_resolution = 256;
  int ssim_window = 7;
  double ssim_c1 = (0.01 * 255) * (0.01 * 255);
  double ssim_c2 = (0.03 * 255) * (0.03 * 255);
  int min_faces_for_pose = 1;
  /// Accepted faces keep their step-1 corners for markers the planar
  /// re-detection misses. Off in the pipeline proper; used to build the
  /// ungated comparison variant.
  bool keep_unrefined_markers = false;
  /// Saddle-point refinement of the re-detected planar corners. Off by
  /// default: on blurred convex corners it drifts toward the inside.
  bool subpixel_refine = false;
  /// Gate against the face as the camera would image it at the estimated
  /// pose, rectified the same way, instead of the bare template. This keeps
  /// resampling blur out of the score.
  bool rendered_reference = true;
  /// Detector settings for the rectified view; the threshold window spans
  /// about three marker cells at the default planar resolution.
  DetectorParams detector = {.threshold_window = 51};
  /// Accepted faces seen more obliquely than this (cosine between the face
  /// normal and the line of sight) are left out of the final solve whenever a
  /// better-viewed face is available; their cells are too foreshortened for
  /// precise corners.
  double final_min_view_cosine = 0.5;

  /// Throws std::invalid_argument.
  void validate() const;
};

enum class TrackStatus { Tracked, RejectedAllFaces, NoDetections };

const char* to_string(TrackStatus status);
TrackStatus track_status_from_string(const std::string& name);

struct FaceResult {
  int face = 0;
  double ssim = 0.0;
  bool accepted = false;
  std::vector<MarkerObservation> refined_obs;  ///< original image pixels
  bool in_final_solve = false;
};

struct FrameResult {
  int frame = 0;
  TrackStatus status = TrackStatus::NoDetections;
  std::optional<Pose> initial_pose;  ///< absent iff NoDetections
  std::optional<Pose> final_pose;    ///< present iff Tracked
  std::vector<FaceResult> faces;
};

struct PlanarView {
  GrayImage image;
  Homography homography;  ///< undistorted image pixels -> planar pixels
};

/// PnP over every corner of every known marker. Unknown ids are
/// ignored. Throws InitialPoseFailed when nothing usable remains or the
/// solve fails.
Pose estimate_initial_pose(std::span<const MarkerObservation> obs, const CubeLayout& layout,
                           const CameraIntrinsics& cam);

/// Rectifies one face into an R x R view aligned with its template.
/// Throws FaceNotVisible when the face turns away from the camera.
PlanarView warp_face(const GrayImage& image, const Pose& pose, const CubeLayout& layout, int face,
                     const CameraIntrinsics& cam, int resolution);

/// Resamples `image` into the planar frame of `h` (bilinear).
GrayImage rectify(const GrayImage& image, const Homography& h, const CameraIntrinsics& cam, int resolution);

/// What the rectified view of `face` should look like if the pose were
/// exact: the face rendered over `image` at `pose`, rectified through `h`.
GrayImage expected_planar_view(const GrayImage& image, const Pose& pose, const CubeLayout& layout,
                               const Dictionary& dict, int face, const CameraIntrinsics& cam, const Homography& h,
                               int resolution);

/// Mean local SSIM over every full window position. Throws
/// SizeMismatch for unequal sizes or images smaller than the window.
double ssim(const GrayImage& a, const GrayImage& b, const PipelineConfig& config = {});

/// Marker detection on a planar view, with optional saddle-point corner refinement.
std::vector<MarkerObservation> refine_on_planar(const GrayImage& planar, const Dictionary& dict,
                                                const PipelineConfig& config = {});

/// Maps planar corners back through the inverse homography.
std::vector<MarkerObservation> unwarp_corners(std::span<const MarkerObservation> planar_obs, const Homography& h);
/// Same, then re-applies lens distortion so the result is in raw image pixels.
std::vector<MarkerObservation> unwarp_corners(std::span<const MarkerObservation> planar_obs, const Homography& h,
                                              const CameraIntrinsics& cam);

/// Corner correspondences for every observation whose id is on the cube.
std::vector<Correspondence> correspondences(std::span<const MarkerObservation> obs, const CubeLayout& layout);

/// Holds the face templates so a sequence pays for them once.
class Tracker {
 public:
  Tracker(CubeLayout layout, Dictionary dict, CameraIntrinsics cam, PipelineConfig config = {});

  FrameResult track_frame(const GrayImage& image, std::span<const MarkerObservation> obs, int frame = 0) const;

  /// Independent per-frame tracking; `threads` > 1 fans frames out to
  /// workers, with output identical to the serial run and in input order.
  std::vector<FrameResult> track_sequence(std::span<const SynthFrame> frames, int threads = 1) const;

  const PipelineConfig& config() const { return config_; }
  const GrayImage& face_template(int face) const;

 private:
  CubeLayout layout_;
  Dictionary dict_;
  CameraIntrinsics cam_;
  PipelineConfig config_;
  std::vector<FaceTemplate> templates_;
};

FrameResult track_frame(const GrayImage& image, std::span<const MarkerObservation> obs, const CubeLayout& layout,
                        const Dictionary& dict, const CameraIntrinsics& cam, const PipelineConfig& config = {});

}  // namespace cubetrack
