#include "cubetrack/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubetrack/errors.hpp"

namespace cubetrack {

namespace {

Quat canonical(const Quat& q) {
  Quat n = q.normalized();
  bool flip = n.w() < 0.0;
  if (n.w() == 0.0) {
    // Half-turn: q and -q both have w == 0, pin the sign on the vector part.
    for (int i = 0; i < 3; ++i) {
      if (n.vec()[i] != 0.0) {
        flip = n.vec()[i] < 0.0;
        break;
      }
    }
  }
  if (flip) n.coeffs() = -n.coeffs();
  return n;
}

}  // namespace

Pose::Pose(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

Pose::Pose(const Mat3& r, const Vec3& t) : rotation(Quat(r).normalized()), translation(t) {}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose invert(const Pose& p) {
  const Quat qi = p.rotation.conjugate();
  return {qi, -(qi * p.translation)};
}

double rotation_geodesic(const Quat& a, const Quat& b) {
  const Quat rel = (a.normalized().conjugate() * b.normalized());
  const double v = rel.vec().norm();
  const double w = std::abs(rel.w());
  return 2.0 * std::atan2(v, w);
}

double rotation_geodesic(const Pose& a, const Pose& b) {
  return rotation_geodesic(a.rotation, b.rotation);
}

Vec3 so3_log(const Quat& q) {
  const Quat c = canonical(q);
  const double v = c.vec().norm();
  if (v < 1e-12) return 2.0 * c.vec() / c.w();
  const double angle = 2.0 * std::atan2(v, c.w());
  return c.vec() * (angle / v);
}

Quat so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  const Vec3 axis = omega / theta;
  return Quat(Eigen::AngleAxisd(theta, axis)).normalized();
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

namespace {

// Left Jacobian of SO(3); maps the twist's rho to the pose translation.
Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < 1e-8) return Mat3::Identity() + 0.5 * w + w * w / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

}  // namespace

Eigen::Matrix<double, 6, 1> se3_log(const Pose& p) {
  const Vec3 omega = so3_log(p.rotation);
  const Vec3 rho = so3_left_jacobian(omega).inverse() * p.translation;
  Eigen::Matrix<double, 6, 1> xi;
  xi << rho, omega;
  return xi;
}

Pose se3_exp(const Eigen::Matrix<double, 6, 1>& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 omega = xi.tail<3>();
  return {so3_exp(omega), so3_left_jacobian(omega) * rho};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("principal point outside the sensor");
  if (!std::isfinite(k1) || !std::isfinite(k2)) throw std::invalid_argument("non-finite distortion");
}

Vec2 CameraIntrinsics::distort_normalized(const Vec2& xy) const {
  const double r2 = xy.squaredNorm();
  return xy * (1.0 + k1 * r2 + k2 * r2 * r2);
}

Vec2 CameraIntrinsics::undistort_normalized(const Vec2& xy_distorted) const {
  if (!has_distortion()) return xy_distorted;
  const double rd = xy_distorted.norm();
  if (rd == 0.0) return xy_distorted;
  // Newton iteration on the radial polynomial r (1 + k1 r^2 + k2 r^4) = rd.
  double r = rd;
  for (int it = 0; it < 20; ++it) {
    const double r2 = r * r;
    const double f = r * (1.0 + k1 * r2 + k2 * r2 * r2) - rd;
    const double df = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
    if (df <= 0.0) break;
    const double step = f / df;
    r -= step;
    if (std::abs(step) < 1e-9) {
      // One extra Newton step costs nothing and lands well below the tolerance.
      const double r2b = r * r;
      r -= (r * (1.0 + k1 * r2b + k2 * r2b * r2b) - rd) / (1.0 + 3.0 * k1 * r2b + 5.0 * k2 * r2b * r2b);
      break;
    }
  }
  return xy_distorted * (r / rd);
}

Vec2 CameraIntrinsics::undistort_pixel(const Vec2& px) const {
  if (!has_distortion()) return px;
  return normalized_to_pixel(undistort_normalized(pixel_to_normalized(px)));
}

Vec2 CameraIntrinsics::distort_pixel(const Vec2& px_undistorted) const {
  if (!has_distortion()) return px_undistorted;
  return normalized_to_pixel(distort_normalized(pixel_to_normalized(px_undistorted)));
}

bool CameraIntrinsics::contains(const Vec2& px, double margin) const {
  return px.x() >= -0.5 + margin && px.y() >= -0.5 + margin && px.x() <= width - 0.5 - margin &&
         px.y() <= height - 0.5 - margin;
}

Vec2 project_pinhole(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z() > 1e-6)) throw PointBehindCamera("z = " + std::to_string(p.z()));
  return cam.normalized_to_pixel({p.x() / p.z(), p.y() / p.z()});
}

Vec2 project_point(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z() > 1e-6)) throw PointBehindCamera("z = " + std::to_string(p.z()));
  const Vec2 xy(p.x() / p.z(), p.y() / p.z());
  return cam.normalized_to_pixel(cam.distort_normalized(xy));
}

Homography::Homography(const Mat3& m) : m_(m) {
  if (std::abs(m_(2, 2)) > 1e-300) m_ /= m_(2, 2);
}

Vec2 Homography::apply(const Vec2& p) const {
  const Vec3 h = m_ * Vec3(p.x(), p.y(), 1.0);
  return {h.x() / h.z(), h.y() / h.z()};
}

Homography Homography::inverse() const {
  const double det = m_.determinant();
  if (!(std::abs(det) > 1e-12)) throw NonInvertibleHomography("|det| = " + std::to_string(std::abs(det)));
  return Homography(m_.inverse());
}

Homography compose(const Homography& a, const Homography& b) { return Homography(a.matrix() * b.matrix()); }

double cross2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Mat3 normalizer(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  if (!(d > 0.0)) throw DegenerateConfiguration("coincident points");
  const double s = std::sqrt(2.0) / d;
  Mat3 t;
  t << s, 0.0, -s * c.x(), 0.0, s, -s * c.y(), 0.0, 0.0, 1.0;
  return t;
}

bool all_collinear(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  return es.eigenvalues()(0) <= 1e-12 * std::max(es.eigenvalues()(1), 1e-300);
}

}  // namespace

Homography solve_homography(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size()) throw DegenerateConfiguration("source/destination size mismatch");
  const std::size_t n = src.size();
  if (n < 4) throw DegenerateConfiguration("need at least 4 correspondences, got " + std::to_string(n));

  const Mat3 ts = normalizer(src);
  const Mat3 td = normalizer(dst);
  std::vector<Vec2> s(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = (ts * src[i].homogeneous()).hnormalized();
    d[i] = (td * dst[i].homogeneous()).hnormalized();
  }

  if (n == 4) {
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j)
        for (std::size_t k = j + 1; k < 4; ++k)
          if (std::abs(cross2(s[i], s[j], s[k])) < 1e-9)
            throw DegenerateConfiguration("collinear source triple");
  } else if (all_collinear(s)) {
    throw DegenerateConfiguration("collinear source points");
  }

  Eigen::Matrix<double, Eigen::Dynamic, 9> a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = s[i].x(), y = s[i].y(), u = d[i].x(), v = d[i].y();
    a.row(2 * i) << -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 9>> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (n > 4 && sv(7) <= 1e-10 * sv(0)) throw DegenerateConfiguration("homography not unique");
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3 m = td.inverse() * hn * ts;
  if (!m.allFinite()) throw DegenerateConfiguration("non-finite homography");
  Homography result(m);
  if (!(std::abs(result.determinant()) > 1e-12)) throw DegenerateConfiguration("singular homography");
  return result;
}

}  // namespace cubetrack
