#include "cubetrack/pnp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "cubetrack/errors.hpp"

namespace cubetrack {

namespace {

constexpr int kMaxIterations = 100;
constexpr double kStepTolerance = 1e-10;
constexpr double kDivergedRmse = 100.0;
constexpr double kAmbiguityRatio = 1.5;

struct Undistorted {
  std::vector<Vec3> object;
  std::vector<Vec2> pixel;
};

Undistorted undistort_all(std::span<const Correspondence> corrs, const CameraIntrinsics& cam) {
  Undistorted u;
  u.object.reserve(corrs.size());
  u.pixel.reserve(corrs.size());
  for (const auto& c : corrs) {
    if (!c.object_point.allFinite() || !c.image_point.allFinite())
      throw DegenerateGeometry("non-finite correspondence");
    u.object.push_back(c.object_point);
    u.pixel.push_back(cam.undistort_pixel(c.image_point));
  }
  return u;
}

// Sum of squared residuals, +inf when any point is not in front.
double cost(const Pose& pose, const Undistorted& u, const CameraIntrinsics& cam) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.object.size(); ++i) {
    const Vec3 x = pose.apply(u.object[i]);
    if (x.z() <= 1e-6) return std::numeric_limits<double>::infinity();
    const Vec2 p(cam.fx * x.x() / x.z() + cam.cx, cam.fy * x.y() / x.z() + cam.cy);
    s += (p - u.pixel[i]).squaredNorm();
  }
  return s;
}

void residuals_and_jacobian(const Pose& pose, const Undistorted& u, const CameraIntrinsics& cam, Eigen::VectorXd* r,
                            Eigen::MatrixXd* j) {
  const std::size_t n = u.object.size();
  if (r) r->resize(2 * n);
  if (j) j->resize(2 * n, 6);
  const Mat3 rot = pose.rotation_matrix();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 rx = rot * u.object[i];
    const Vec3 x = rx + pose.translation;
    if (x.z() <= 1e-6) throw PointBehindCamera("z = " + std::to_string(x.z()));
    const double iz = 1.0 / x.z();
    if (r) {
      (*r)(2 * i) = cam.fx * x.x() * iz + cam.cx - u.pixel[i].x();
      (*r)(2 * i + 1) = cam.fy * x.y() * iz + cam.cy - u.pixel[i].y();
    }
    if (j) {
      Eigen::Matrix<double, 2, 3> dp;
      dp << cam.fx * iz, 0.0, -cam.fx * x.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * x.y() * iz * iz;
      j->block<2, 3>(2 * i, 0) = -dp * skew(rx);
      j->block<2, 3>(2 * i, 3) = dp;
    }
  }
}

PnpSolution refine(const Pose& start, const Undistorted& u, const CameraIntrinsics& cam) {
  const double n = static_cast<double>(u.object.size());
  Pose pose = start;
  double c = cost(pose, u, cam);
  if (!std::isfinite(c)) throw DivergedSolution("initial pose places points behind the camera");
  double lambda = 1e-3;
  PnpSolution sol{pose, 0.0, 0, false};
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  for (int it = 1; it <= kMaxIterations; ++it) {
    sol.iterations = it;
    residuals_and_jacobian(pose, u, cam, &r, &j);
    const Eigen::Matrix<double, 6, 6> jtj = j.transpose() * j;
    const Vector6d g = j.transpose() * r;
    Eigen::Matrix<double, 6, 6> a = jtj;
    for (int k = 0; k < 6; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
    const Vector6d step = a.ldlt().solve(-g);
    if (!step.allFinite()) break;
    const Pose candidate = apply_increment(pose, step);
    const double cc = cost(candidate, u, cam);
    if (cc < c) {
      pose = candidate;
      c = cc;
      lambda = std::max(lambda / 10.0, 1e-12);
    } else {
      lambda = std::min(lambda * 10.0, 1e12);
    }
    if (step.norm() < kStepTolerance) {
      sol.converged = true;
      break;
    }
  }
  sol.pose = pose;
  sol.rmse = std::sqrt(c / n);
  return sol;
}

Pose from_projection_rows(const Eigen::Matrix<double, 3, 4>& p_in) {
  Eigen::Matrix<double, 3, 4> p = p_in;
  Mat3 m = p.leftCols<3>();
  if (m.determinant() < 0) {
    p = -p;
    m = -m;
  }
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 rot = svd.matrixU() * svd.matrixV().transpose();
  if (rot.determinant() < 0) rot = -rot;
  const double scale = svd.singularValues().mean();
  if (!(scale > 0)) throw DegenerateGeometry("projection matrix has zero scale");
  return Pose(rot, p.col(3) / scale);
}

Pose dlt_pose(const Undistorted& u, const CameraIntrinsics& cam) {
  const std::size_t n = u.object.size();
  Vec3 mean = Vec3::Zero();
  for (const auto& x : u.object) mean += x;
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (const auto& x : u.object) spread += (x - mean).norm();
  spread /= static_cast<double>(n);
  const double s = std::sqrt(3.0) / spread;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 xs = (u.object[i] - mean) * s;
    const Eigen::Vector4d xh(xs.x(), xs.y(), xs.z(), 1.0);
    const double x = (u.pixel[i].x() - cam.cx) / cam.fx;
    const double y = (u.pixel[i].y() - cam.cy) / cam.fy;
    const auto r0 = static_cast<Eigen::Index>(2 * i);
    a.block<1, 4>(r0, 0) = xh.transpose();
    a.block<1, 4>(r0, 8) = -x * xh.transpose();
    a.block<1, 4>(r0 + 1, 4) = xh.transpose();
    a.block<1, 4>(r0 + 1, 8) = -y * xh.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> pn;
  pn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8), v(9), v(10), v(11);
  // Undo the object-space normalization: X_n = s (X - mean).
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() *= s;
  t.topRightCorner<3, 1>() = -s * mean;
  Eigen::Matrix<double, 3, 4> p = pn * t;
  // The sign of the null vector is arbitrary; pick the one with positive depths.
  int positive = 0;
  for (const auto& x : u.object) positive += (p.row(2).head<3>().dot(x) + p(2, 3)) > 0 ? 1 : -1;
  if (positive < 0) p = -p;
  Eigen::Matrix<double, 3, 4> fixed = p;
  if (p.leftCols<3>().determinant() < 0) {
    // A reflected solution: flip the handedness of the rotation part only.
    // This only happens with noise-dominated input; the refinement repairs it.
    Eigen::JacobiSVD<Mat3> msvd(p.leftCols<3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 um = msvd.matrixU();
    um.col(2) = -um.col(2);
    fixed.leftCols<3>() = um * msvd.singularValues().asDiagonal() * msvd.matrixV().transpose();
  }
  return from_projection_rows(fixed);
}

struct PlaneFrame {
  Vec3 origin;
  Mat3 basis;  // rows: e1, e2, normal
};

std::optional<PlaneFrame> plane_of(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& x : pts) mean += x;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd centered(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) centered.col(static_cast<Eigen::Index>(i)) = pts[i] - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullU);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0)) throw DegenerateGeometry("all object points coincide");
  if (sv(1) <= 1e-9 * sv(0)) throw DegenerateGeometry("object points are collinear");
  if (sv(2) > 1e-6 * sv(0)) return std::nullopt;
  PlaneFrame f;
  f.origin = mean;
  const Vec3 e1 = svd.matrixU().col(0);
  const Vec3 e2 = svd.matrixU().col(1);
  f.basis.row(0) = e1.transpose();
  f.basis.row(1) = e2.transpose();
  f.basis.row(2) = e1.cross(e2).transpose();
  return f;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

// Both candidate poses for a planar target: the homography decomposition and
// its mirror about the line of sight to the plane origin.
std::array<Pose, 2> planar_candidates(const Undistorted& u, const CameraIntrinsics& cam, const PlaneFrame& f) {
  std::vector<Vec2> plane_pts, norm_pts;
  for (std::size_t i = 0; i < u.object.size(); ++i) {
    const Vec3 q = f.basis * (u.object[i] - f.origin);
    plane_pts.emplace_back(q.x(), q.y());
    norm_pts.emplace_back((u.pixel[i].x() - cam.cx) / cam.fx, (u.pixel[i].y() - cam.cy) / cam.fy);
  }
  Homography h;
  try {
    h = solve_homography(plane_pts, norm_pts);
  } catch (const Error& e) {
    throw DegenerateGeometry(std::string("planar initialization failed: ") + e.what());
  }
  Mat3 m = h.matrix();
  const double scale = 2.0 / (m.col(0).norm() + m.col(1).norm());
  m *= scale;
  if (m(2, 2) < 0) m = -m;  // plane origin in front of the camera
  Mat3 r;
  r.col(0) = m.col(0);
  r.col(1) = m.col(1);
  r.col(2) = m.col(0).cross(m.col(1));
  const Mat3 r_pc = nearest_rotation(r);
  const Vec3 t_pc = m.col(2);

  const Vec3 n = r_pc.col(2);
  const Vec3 v = t_pc.normalized();
  const Vec3 n2 = 2.0 * n.dot(v) * v - n;
  const Vec3 axis = n.cross(n2);
  Mat3 flip = Mat3::Identity();
  if (axis.norm() > 1e-12) flip = so3_exp(axis.normalized() * std::atan2(axis.norm(), n.dot(n2)));
  const Mat3 r_pc2 = flip * r_pc;

  auto to_object = [&](const Mat3& rpc) { return Pose(Mat3(rpc * f.basis), Vec3(t_pc - rpc * f.basis * f.origin)); };
  return {to_object(r_pc), to_object(r_pc2)};
}

}  // namespace

Pose apply_increment(const Pose& pose, const Vector6d& delta) {
  const Quat dq(so3_exp(Vec3(delta.head<3>())));
  return Pose(dq * pose.rotation, pose.translation + delta.tail<3>());
}

Eigen::VectorXd reprojection_residuals(const Pose& pose, std::span<const Correspondence> corrs,
                                       const CameraIntrinsics& cam) {
  const Undistorted u = undistort_all(corrs, cam);
  Eigen::VectorXd r;
  residuals_and_jacobian(pose, u, cam, &r, nullptr);
  return r;
}

Eigen::MatrixXd reprojection_jacobian(const Pose& pose, std::span<const Correspondence> corrs,
                                      const CameraIntrinsics& cam) {
  const Undistorted u = undistort_all(corrs, cam);
  Eigen::MatrixXd j;
  residuals_and_jacobian(pose, u, cam, nullptr, &j);
  return j;
}

double reprojection_rmse(const Pose& pose, std::span<const Correspondence> corrs, const CameraIntrinsics& cam) {
  if (corrs.empty()) return 0.0;
  const Undistorted u = undistort_all(corrs, cam);
  return std::sqrt(cost(pose, u, cam) / static_cast<double>(corrs.size()));
}

PnpSolution refine_pose(const Pose& start, std::span<const Correspondence> corrs, const CameraIntrinsics& cam) {
  return refine(start, undistort_all(corrs, cam), cam);
}

PnpSolution solve_pnp(std::span<const Correspondence> corrs, const CameraIntrinsics& cam, const std::optional<Pose>& init) {
  if (corrs.size() < 4) throw DegenerateGeometry(std::to_string(corrs.size()) + " correspondences, need at least 4");
  const Undistorted u = undistort_all(corrs, cam);
  const auto plane = plane_of(u.object);
  if (!plane && corrs.size() < 6)
    throw DegenerateGeometry(std::to_string(corrs.size()) + " non-coplanar correspondences, need at least 6");

  PnpSolution sol;
  if (init) {
    sol = refine(*init, u, cam);
  } else if (!plane) {
    sol = refine(dlt_pose(u, cam), u, cam);
  } else {
    const auto cands = planar_candidates(u, cam, *plane);
    std::optional<PnpSolution> a, b;
    try {
      a = refine(cands[0], u, cam);
    } catch (const DivergedSolution&) {
    }
    try {
      b = refine(cands[1], u, cam);
    } catch (const DivergedSolution&) {
    }
    if (!a && !b) throw DivergedSolution("no planar candidate lies in front of the camera");
    if (!a || (b && b->rmse < a->rmse)) std::swap(a, b);
    sol = *a;
    const bool separated = !b || (b->rmse >= kAmbiguityRatio * a->rmse && b->rmse > a->rmse);
    sol.converged = sol.converged && separated;
  }
  if (!(sol.rmse <= kDivergedRmse))
    throw DivergedSolution("reprojection RMSE " + std::to_string(sol.rmse) + " px after refinement");
  return sol;
}

}  // namespace cubetrack
