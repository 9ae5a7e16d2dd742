#include <doctest.h>

#include <cmath>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/errors.hpp"
#include "cubetrack/synth.hpp"

using namespace cubetrack;

namespace {

const CubeLayout& layout() {
  static const CubeLayout l = CubeLayout::make();
  return l;
}

const Dictionary& dict() {
  static const Dictionary d = generate_dictionary(16, kDefaultDictionarySeed);
  return d;
}

}  // namespace

TEST_CASE("noiseless observations reproject from the true pose") {
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout(), cam, 30, 10.0, 5);
  for (int i = 0; i < 30; ++i) {
    const SynthFrame f = render_frame(layout(), dict(), poses[i], cam, NoiseModel{}, i, i / 10.0);
    CHECK(f.image.width == cam.width);
    CHECK_FALSE(f.observations.empty());
    for (const auto& o : f.observations) {
      REQUIRE(layout().face_of_marker(o.id).has_value());
      const auto corners = marker_corners_3d(layout(), o.id);
      for (int k = 0; k < 4; ++k)
        CHECK((project_point(f.true_pose * corners[k], cam) - o.corners[k]).norm() <= 0.51);
    }
  }
}

TEST_CASE("corner noise has the requested spread") {
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout(), cam, 200, 10.0, 6);
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  for (int i = 0; i < 200; ++i) {
    const auto obs = simulate_observations(layout(), poses[i], cam, NoiseModel{2.0, 0.0, 0, 6}, i);
    for (const auto& o : obs) {
      const auto corners = marker_corners_3d(layout(), o.id);
      for (int k = 0; k < 4; ++k) {
        const Vec2 d = o.corners[k] - project_point(poses[i] * corners[k], cam);
        sum += d.x() + d.y();
        sum2 += d.squaredNorm();
        n += 2;
      }
    }
  }
  CHECK(std::abs(sum / n) < 0.1);
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("dropout removes roughly the requested fraction") {
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout(), cam, 200, 10.0, 7);
  long kept = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    total += static_cast<long>(simulate_observations(layout(), poses[i], cam, NoiseModel{}, i).size());
    kept += static_cast<long>(simulate_observations(layout(), poses[i], cam, NoiseModel{0.0, 0.3, 0, 7}, i).size());
  }
  CHECK(static_cast<double>(kept) / total == doctest::Approx(0.7).epsilon(0.1));
}

TEST_CASE("rendering is deterministic and order independent") {
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout(), cam, 5, 10.0, 8);
  const NoiseModel noise{1.0, 0.1, 1, 8};
  const SynthFrame a = render_frame(layout(), dict(), poses[3], cam, noise, 3);
  render_frame(layout(), dict(), poses[1], cam, noise, 1);
  const SynthFrame b = render_frame(layout(), dict(), poses[3], cam, noise, 3);
  CHECK(a.image == b.image);
  REQUIRE(a.observations.size() == b.observations.size());
  for (std::size_t i = 0; i < a.observations.size(); ++i)
    CHECK(a.observations[i].corners[0] == b.observations[i].corners[0]);
}

TEST_CASE("trajectory poses match the generated sequence") {
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout(), cam, 10, 10.0, 9);
  const SynthSequence seq = generate_trajectory(layout(), dict(), cam, 10, 10.0, NoiseModel{}, 9, {}, {}, false);
  REQUIRE(seq.frames.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(seq.frames[i].t_s == doctest::Approx(i / 10.0));
    CHECK((seq.frames[i].true_pose.translation - poses[i].translation).norm() == 0.0);
    CHECK(visible_faces(layout(), poses[i]).size() >= 1);
  }
}

TEST_CASE("visibility and view cosine") {
  const Pose facing(so3_exp(Vec3(0, M_PI / 2, 0)), Vec3(0, 0, 0.8));
  const auto faces = visible_faces(layout(), facing);
  REQUIRE(faces.size() == 1);
  CHECK(face_view_cosine(layout(), faces[0], facing) == doctest::Approx(1.0).epsilon(0.01));
  const Pose behind(Quat::Identity(), Vec3(0, 0, -1));
  CHECK_THROWS_AS(render_frame(layout(), dict(), behind, default_camera(), NoiseModel{}), CubeNotVisible);
}

TEST_CASE("noise model validation") {
  CHECK_THROWS_AS((NoiseModel{-1.0, 0.0, 0, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((NoiseModel{0.0, 1.5, 0, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((NoiseModel{0.0, 0.0, -1, 0}.validate()), std::invalid_argument);
}
