#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>

namespace cubetrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Rigid transform mapping points of a source frame into a target frame:
/// p_target = R * p_source + t. Rotation is stored as a unit quaternion and
/// re-normalized by every constructor and operation.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Quat& q, const Vec3& t);
  Pose(const Mat3& r, const Vec3& t);

  static Pose identity() { return {}; }

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 operator*(const Vec3& p) const { return apply(p); }
};

/// a * b: apply b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Minimal rotation angle between the orientations of a and b, in [0, pi].
double rotation_geodesic(const Pose& a, const Pose& b);
double rotation_geodesic(const Quat& a, const Quat& b);

/// Rotation vector (axis * angle, angle in [0, pi]) of a unit quaternion.
/// Sign-invariant: q and -q map to the same vector.
Vec3 so3_log(const Quat& q);
Quat so3_exp(const Vec3& omega);
Mat3 skew(const Vec3& v);

/// Twist (rho, omega) of an SE(3) element and its inverse; rho is the
/// translational part in the Lie algebra, not the pose translation.
Eigen::Matrix<double, 6, 1> se3_log(const Pose& p);
Pose se3_exp(const Eigen::Matrix<double, 6, 1>& xi);

/// Pinhole camera with two-term radial distortion (k1, k2) applied in
/// normalized image coordinates.
struct CameraIntrinsics {
  double fx = 900.0;
  double fy = 900.0;
  double cx = 640.0;
  double cy = 480.0;
  double k1 = 0.0;
  double k2 = 0.0;
  int width = 1280;
  int height = 960;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
  bool has_distortion() const { return k1 != 0.0 || k2 != 0.0; }

  Vec2 distort_normalized(const Vec2& xy) const;
  /// Inverse of distort_normalized, solved iteratively (at most 20 iterations).
  Vec2 undistort_normalized(const Vec2& xy_distorted) const;

  /// Normalized (undistorted) coordinates to pinhole pixels and back.
  Vec2 normalized_to_pixel(const Vec2& xy) const { return {fx * xy.x() + cx, fy * xy.y() + cy}; }
  Vec2 pixel_to_normalized(const Vec2& px) const { return {(px.x() - cx) / fx, (px.y() - cy) / fy}; }

  /// Raw (distorted) pixel to its pinhole location and back.
  Vec2 undistort_pixel(const Vec2& px) const;
  Vec2 distort_pixel(const Vec2& px_undistorted) const;

  bool contains(const Vec2& px, double margin = 0.0) const;
};

/// Camera-frame point to raw (distorted) pixel coordinates. Throws
/// PointBehindCamera when p.z <= 1e-6.
Vec2 project_point(const Vec3& p, const CameraIntrinsics& cam);
/// Same but without distortion (pinhole pixel coordinates).
Vec2 project_pinhole(const Vec3& p, const CameraIntrinsics& cam);

/// Projective map between two planes, stored with H(2,2) == 1 whenever that
/// element is nonzero.
class Homography {
 public:
  Homography() : m_(Mat3::Identity()) {}
  explicit Homography(const Mat3& m);

  const Mat3& matrix() const { return m_; }
  Vec2 apply(const Vec2& p) const;
  Vec2 operator()(const Vec2& p) const { return apply(p); }
  /// Throws NonInvertibleHomography when |det| <= 1e-12.
  Homography inverse() const;
  double determinant() const { return m_.determinant(); }

 private:
  Mat3 m_;
};

/// a ∘ b: apply b first.
Homography compose(const Homography& a, const Homography& b);

/// Normalized direct linear transform over >= 4 correspondences.
/// Throws DegenerateConfiguration for fewer than 4 points, for four points
/// with a collinear triple, or for any point set without a unique solution.
Homography solve_homography(std::span<const Vec2> src, std::span<const Vec2> dst);

/// Twice the signed area of the triangle (a, b, c).
double cross2(const Vec2& a, const Vec2& b, const Vec2& c);

}  // namespace cubetrack
