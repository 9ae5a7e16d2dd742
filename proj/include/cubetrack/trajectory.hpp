#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cubetrack/geometry.hpp"

namespace cubetrack {

struct TrajectorySample {
  double t = 0.0;     ///< seconds
  Pose pose;          ///< gripper (or cube) in the episode's reference frame
  double actuation = 0.0;  ///< 0 fully open, 1 fully closed
};

struct Episode {
  std::string id;
  std::vector<TrajectorySample> samples;
  double rate_hz = 10.0;
  std::string frame = "camera";  ///< "camera" or "world"

  /// Throws std::invalid_argument unless there are at least two samples,
  /// timestamps strictly increase, actuations lie in [0, 1], and the median
  /// sample spacing is within 20% of the nominal period.
  void validate() const;
};

/// Index pairs (i in a, j in b) matching every sample of `a` to the sample of
/// `b` nearest in time. Throws LengthMismatch for different sample counts and
/// TimestampGap when a nearest neighbour is more than half a nominal period
/// away (using the faster of the two rates) or two samples share a partner.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Episode& a, const Episode& b);

/// Mean squared translation distance, m^2.
double mse_position(const Episode& a, const Episode& b);

enum class RotationConvention { PerAxis, Geodesic };

const char* to_string(RotationConvention convention);
/// Accepts "per-axis" and "geodesic"; throws std::invalid_argument otherwise.
RotationConvention rotation_convention_from_string(const std::string& name);

/// PerAxis: mean over samples and the three axes of the squared difference of
/// rotation-vector components. Geodesic: mean squared rotation angle between
/// the two orientations. rad^2.
double mse_rotation(const Episode& a, const Episode& b, RotationConvention convention = RotationConvention::PerAxis);

struct ActuationCalibration {
  Pose open_ref;
  Pose closed_ref;
};

/// Position of the tag along the screw motion carrying open_ref to closed_ref,
/// clamped to [0, 1]. The projection uses the translation chord unless the two
/// references are less than 1 mm apart, in which case the rotation angle about
/// the screw axis is used. Throws DegenerateCalibration when the references
/// are within 1 mm and 0.01 rad of each other.
double actuation_from_tag(const Pose& tag_pose, const ActuationCalibration& calib);

/// Pose at parameter s of the screw interpolation open_ref -> closed_ref.
Pose screw_interpolate(const Pose& from, const Pose& to, double s);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  /// Throws std::invalid_argument for negative counts.
  void validate() const;
  std::int64_t total() const { return tp + fp + fn + tn; }
};

/// Each throws UndefinedMetric when its denominator is zero.
double accuracy(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double f1_score(const ConfusionCounts& c);

/// All four metrics; an undefined metric is left empty instead of throwing.
struct ClassifierMetrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};
ClassifierMetrics classifier_metrics(const ConfusionCounts& c);

/// Episode JSONL: a header line {"episode", "rate_hz", "frame"} followed by one
/// {"t", "q": [w, x, y, z], "p": [x, y, z], "a"} line per sample. Reading is
/// strict and throws SchemaViolation with the offending line number.
void write_episode(std::ostream& out, const Episode& episode);
void write_episode(const std::filesystem::path& path, const Episode& episode);
Episode read_episode(std::istream& in, const std::string& source = "<stream>");
Episode read_episode(const std::filesystem::path& path);

/// Episode from poses sampled at `rate_hz` starting at t = 0.
Episode episode_from_poses(const std::string& id, const std::vector<Pose>& poses, double rate_hz,
                           const std::string& frame = "camera");

}  // namespace cubetrack
