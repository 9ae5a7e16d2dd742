#include <doctest.h>

#include <random>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/errors.hpp"
#include "cubetrack/pnp.hpp"
#include "cubetrack/synth.hpp"

using namespace cubetrack;

namespace {

std::vector<Correspondence> project_all(const std::vector<Vec3>& pts, const Pose& pose, const CameraIntrinsics& cam) {
  std::vector<Correspondence> out;
  for (const auto& p : pts) out.push_back({p, project_point(pose * p, cam)});
  return out;
}

}  // namespace

TEST_CASE("exact recovery from noiseless non-coplanar points") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const CameraIntrinsics cam = default_camera();
  for (int trial = 0; trial < 100; ++trial) {
    const Pose truth(so3_exp(Vec3(u(rng), u(rng), u(rng))), Vec3(0.1 * u(rng), 0.1 * u(rng), 0.8 + 0.2 * u(rng)));
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i) pts.emplace_back(0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng));
    const PnpSolution sol = solve_pnp(project_all(pts, truth, cam), cam);
    CHECK((sol.pose.translation - truth.translation).norm() < 1e-8);
    CHECK(rotation_geodesic(sol.pose, truth) < 1e-8);
    CHECK(sol.rmse < 1e-6);
  }
}

TEST_CASE("exact recovery from one observed cube face") {
  const CubeLayout layout = CubeLayout::make();
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout, cam, 50, 10.0, 32);
  for (const Pose& truth : poses) {
    const int face = visible_faces(layout, truth).front();
    std::vector<Vec3> pts;
    for (const auto& m : layout.face(face).markers) pts.insert(pts.end(), m.corners.begin(), m.corners.end());
    const PnpSolution sol = solve_pnp(project_all(pts, truth, cam), cam);
    CHECK((sol.pose.translation - truth.translation).norm() < 1e-7);
    CHECK(rotation_geodesic(sol.pose, truth) < 1e-6);
  }
}

TEST_CASE("distorted camera is handled") {
  CameraIntrinsics cam = default_camera();
  cam.k1 = -0.1;
  cam.k2 = 0.02;
  const Pose truth(so3_exp(Vec3(0.2, -0.3, 0.1)), Vec3(0.05, -0.02, 0.7));
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.emplace_back(i & 1 ? 0.04 : -0.04, i & 2 ? 0.04 : -0.04, i & 4 ? 0.04 : -0.04);
  const PnpSolution sol = solve_pnp(project_all(pts, truth, cam), cam);
  CHECK((sol.pose.translation - truth.translation).norm() < 1e-8);
}

TEST_CASE("refinement never increases the error") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n(0.0, 1.0);
  const CameraIntrinsics cam = default_camera();
  const Pose truth(so3_exp(Vec3(0.1, 0.4, -0.2)), Vec3(0.0, 0.0, 0.9));
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.emplace_back(i & 1 ? 0.04 : -0.04, i & 2 ? 0.04 : -0.04, i & 4 ? 0.04 : -0.04);
  auto corrs = project_all(pts, truth, cam);
  for (auto& c : corrs) c.image_point += Vec2(n(rng), n(rng));
  const Pose start = apply_increment(truth, (Vector6d() << 0.02, -0.01, 0.03, 0.01, 0.01, -0.02).finished());
  const PnpSolution sol = refine_pose(start, corrs, cam);
  CHECK(sol.rmse <= reprojection_rmse(start, corrs, cam));
  CHECK(sol.converged);
}

TEST_CASE("degenerate inputs") {
  const CameraIntrinsics cam = default_camera();
  const Pose truth(Quat::Identity(), Vec3(0, 0, 1));
  CHECK_THROWS_AS(solve_pnp(project_all({Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0.1, 0)}, truth, cam), cam),
                  DegenerateGeometry);
  std::vector<Vec3> line;
  for (int i = 0; i < 6; ++i) line.emplace_back(0.01 * i, 0.0, 0.0);
  CHECK_THROWS_AS(solve_pnp(project_all(line, truth, cam), cam), DegenerateGeometry);
  CHECK_THROWS_AS(reprojection_jacobian(Pose(Quat::Identity(), Vec3(0, 0, -1)), project_all({Vec3::Zero()}, truth, cam), cam),
                  PointBehindCamera);
}
