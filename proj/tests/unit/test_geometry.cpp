#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "cubetrack/errors.hpp"
#include "cubetrack/geometry.hpp"
#include "cubetrack/observation.hpp"

using namespace cubetrack;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_CASE("so3 exp matches the angle-axis oracle and log inverts it") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = random_vec(rng, 1.8);
    const Eigen::AngleAxisd oracle(w.norm(), w.normalized());
    CHECK((so3_exp(w).toRotationMatrix() - oracle.toRotationMatrix()).norm() < 1e-12);
    CHECK((so3_log(so3_exp(w)) - w).norm() < 1e-10);
  }
  CHECK(so3_log(Quat::Identity()).norm() == 0.0);
  CHECK((so3_exp(Vec3(1e-12, 0, 0)).coeffs() - Quat::Identity().coeffs()).norm() < 1e-11);
}

TEST_CASE("so3 log is invariant to the quaternion sign") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Quat q = so3_exp(random_vec(rng, 3.0));
    Quat neg = q;
    neg.coeffs() = -q.coeffs();
    CHECK((so3_log(q) - so3_log(neg)).norm() < 1e-9);
  }
}

TEST_CASE("pose composition, inversion and se3 round trip") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose a(so3_exp(random_vec(rng, 2.0)), random_vec(rng, 1.0));
    const Pose b(so3_exp(random_vec(rng, 2.0)), random_vec(rng, 1.0));
    const Vec3 x = random_vec(rng, 1.0);
    CHECK(((a * b) * x - a * (b * x)).norm() < 1e-12);
    CHECK((invert(a) * (a * x) - x).norm() < 1e-12);
    const Pose back = se3_exp(se3_log(a));
    CHECK((back.translation - a.translation).norm() < 1e-10);
    CHECK(rotation_geodesic(back, a) < 1e-10);
  }
}

TEST_CASE("rotation geodesic equals the rotation angle") {
  const Pose a(so3_exp(Vec3(0, 0, 0.3)), Vec3::Zero());
  const Pose b(so3_exp(Vec3(0, 0, -0.4)), Vec3::Zero());
  CHECK(rotation_geodesic(a, b) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("pinhole projection by hand") {
  CameraIntrinsics cam;
  cam.fx = 800;
  cam.fy = 700;
  cam.cx = 320;
  cam.cy = 240;
  const Vec2 p = project_point(Vec3(0.1, -0.2, 2.0), cam);
  CHECK(p.x() == doctest::Approx(320 + 800 * 0.05));
  CHECK(p.y() == doctest::Approx(240 - 700 * 0.1));
  CHECK_THROWS_AS(project_point(Vec3(0, 0, -1), cam), PointBehindCamera);
}

TEST_CASE("radial distortion by hand and its inverse") {
  CameraIntrinsics cam = CameraIntrinsics{};
  cam.k1 = -0.2;
  cam.k2 = 0.05;
  const Vec2 xy(0.3, -0.2);
  const double r2 = xy.squaredNorm();
  CHECK((cam.distort_normalized(xy) - xy * (1 + cam.k1 * r2 + cam.k2 * r2 * r2)).norm() < 1e-15);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 px(u(rng) * cam.width, u(rng) * cam.height);
    CHECK((cam.distort_pixel(cam.undistort_pixel(px)) - px).norm() < 1e-9);
  }
}

TEST_CASE("camera validation") {
  CameraIntrinsics cam;
  cam.fx = -1;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  CHECK_NOTHROW(CameraIntrinsics{}.validate());
}

TEST_CASE("homography recovers a known matrix") {
  Mat3 m;
  m << 1.2, 0.1, 30, -0.05, 0.9, 12, 1e-4, -2e-4, 1;
  const Homography truth(m);
  std::array<Vec2, 4> src = {Vec2(0, 0), Vec2(0, 100), Vec2(100, 100), Vec2(100, 0)};
  std::array<Vec2, 4> dst;
  for (int i = 0; i < 4; ++i) dst[i] = truth(src[i]);
  const Homography h = solve_homography(src, dst);
  CHECK((h.matrix() - truth.matrix()).norm() < 1e-9);
  CHECK((compose(h, h.inverse()).matrix() - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("homography rejects degenerate input") {
  std::array<Vec2, 4> line = {Vec2(0, 0), Vec2(1, 1), Vec2(2, 2), Vec2(3, 3)};
  std::array<Vec2, 4> dst = {Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)};
  CHECK_THROWS_AS(solve_homography(line, dst), DegenerateConfiguration);
  CHECK_THROWS_AS(Homography(Mat3::Zero()).inverse(), NonInvertibleHomography);
}

TEST_CASE("quad helpers") {
  const std::array<Vec2, 4> square = {Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)};
  CHECK(std::abs(signed_quad_area(square)) == doctest::Approx(1.0));
  CHECK(is_strictly_convex(square));
  const std::array<Vec2, 4> bowtie = {Vec2(0, 0), Vec2(1, 1), Vec2(0, 1), Vec2(1, 0)};
  CHECK_FALSE(is_strictly_convex(bowtie));
}
