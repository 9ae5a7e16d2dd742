#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cubetrack/geometry.hpp"

namespace cubetrack {

struct Correspondence {
  Vec3 object_point;  ///< meters, cube frame
  Vec2 image_point;   ///< distorted pixels
};

struct PnpSolution {
  Pose pose;
  double rmse = 0.0;  ///< undistorted-pixel reprojection RMSE
  int iterations = 0;
  /// False when refinement hit the iteration cap, or when a planar
  /// initialization could not separate its two candidate poses.
  bool converged = false;
};

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Increment [w; v]: rotation exp(w) composed on the left of the current
/// rotation, translation shifted by v.
Pose apply_increment(const Pose& pose, const Vector6d& delta);

/// Stacked (u, v) residuals, projection minus undistorted observation.
Eigen::VectorXd reprojection_residuals(const Pose& pose, std::span<const Correspondence> corrs,
                                       const CameraIntrinsics& cam);

/// d residuals / d increment, 2n x 6. Throws PointBehindCamera.
Eigen::MatrixXd reprojection_jacobian(const Pose& pose, std::span<const Correspondence> corrs,
                                      const CameraIntrinsics& cam);

/// Root mean squared residual norm in undistorted pixels. Points behind the
/// camera make the result +infinity.
double reprojection_rmse(const Pose& pose, std::span<const Correspondence> corrs, const CameraIntrinsics& cam);

/// Linear initialization (DLT for non-coplanar sets, homography decomposition
/// for coplanar ones) unless `init` is given, then damped Gauss-Newton.
/// Throws DegenerateGeometry for too few or collinear points and
/// DivergedSolution when the refined RMSE exceeds 100 px.
PnpSolution solve_pnp(std::span<const Correspondence> corrs, const CameraIntrinsics& cam,
                      const std::optional<Pose>& init = std::nullopt);

/// Damped Gauss-Newton from `start`; never returns a pose with larger RMSE
/// than `start`.
PnpSolution refine_pose(const Pose& start, std::span<const Correspondence> corrs, const CameraIntrinsics& cam);

}  // namespace cubetrack
