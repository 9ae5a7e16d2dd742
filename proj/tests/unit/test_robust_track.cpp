#include <doctest.h>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/errors.hpp"
#include "cubetrack/robust_track.hpp"
#include "cubetrack/synth.hpp"

using namespace cubetrack;

namespace {

struct Scene {
  CubeLayout layout = CubeLayout::make();
  Dictionary dict = generate_dictionary(16, kDefaultDictionarySeed);
  CameraIntrinsics cam = default_camera();
};

const Scene& scene() {
  static const Scene s;
  return s;
}

}  // namespace

TEST_CASE("ssim of identical images is one and drops for noise") {
  GrayImage a(64, 64, 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) a.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 13) % 256);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  GrayImage b = a;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) b.at(x, y) = static_cast<std::uint8_t>((x * 131 + y * 71 + x * y) % 256);
  CHECK(ssim(a, b) < 0.5);
  CHECK_THROWS_AS(ssim(a, GrayImage(32, 32)), SizeMismatch);
}

TEST_CASE("planar view of the true pose matches its expected rendering") {
  const Scene& s = scene();
  const Tracker tracker(s.layout, s.dict, s.cam);
  const auto poses = sample_trajectory_poses(s.layout, s.cam, 10, 10.0, 41);
  for (int i = 0; i < 10; ++i) {
    const SynthFrame f = render_frame(s.layout, s.dict, poses[i], s.cam, NoiseModel{}, i);
    for (int face : visible_faces(s.layout, poses[i])) {
      if (face_view_cosine(s.layout, face, poses[i]) < 0.5) continue;
      const PlanarView v = warp_face(f.image, poses[i], s.layout, face, s.cam, 256);
      const GrayImage expected =
          expected_planar_view(f.image, poses[i], s.layout, s.dict, face, s.cam, v.homography, 256);
      CHECK(ssim(v.image, expected) > 0.9);
      CHECK(ssim(v.image, tracker.face_template(face)) > PipelineConfig{}.ssim_threshold);
    }
  }
}

TEST_CASE("clean frames are tracked and refinement does not hurt") {
  const Scene& s = scene();
  const Tracker tracker(s.layout, s.dict, s.cam);
  const auto poses = sample_trajectory_poses(s.layout, s.cam, 30, 10.0, 42);
  for (int i = 0; i < 30; ++i) {
    const SynthFrame f = render_frame(s.layout, s.dict, poses[i], s.cam, NoiseModel{2.0, 0.0, 0, 42}, i);
    const FrameResult r = tracker.track_frame(f.image, f.observations, i);
    REQUIRE(r.status == TrackStatus::Tracked);
    const double e0 = (r.initial_pose->translation - f.true_pose.translation).norm();
    const double e1 = (r.final_pose->translation - f.true_pose.translation).norm();
    CHECK(e1 <= e0);
    CHECK(rotation_geodesic(*r.final_pose, f.true_pose) < 2e-3);
  }
}

TEST_CASE("blank frame without observations reports no detections") {
  const Scene& s = scene();
  const Tracker tracker(s.layout, s.dict, s.cam);
  const FrameResult r = tracker.track_frame(GrayImage(s.cam.width, s.cam.height, 128), {}, 3);
  CHECK(r.status == TrackStatus::NoDetections);
  CHECK(r.frame == 3);
  CHECK_FALSE(r.initial_pose.has_value());
  CHECK_FALSE(r.final_pose.has_value());
}

TEST_CASE("blank image with stale observations rejects every face") {
  const Scene& s = scene();
  const Tracker tracker(s.layout, s.dict, s.cam);
  const auto poses = sample_trajectory_poses(s.layout, s.cam, 2, 10.0, 43);
  const SynthFrame f = render_frame(s.layout, s.dict, poses[0], s.cam, NoiseModel{}, 0);
  const FrameResult r = tracker.track_frame(GrayImage(s.cam.width, s.cam.height, 128), f.observations, 0);
  CHECK(r.status == TrackStatus::RejectedAllFaces);
  CHECK(r.initial_pose.has_value());
  CHECK_FALSE(r.final_pose.has_value());
  for (const auto& face : r.faces) CHECK_FALSE(face.accepted);
}

TEST_CASE("parallel sequence tracking equals serial tracking") {
  const Scene& s = scene();
  const Tracker tracker(s.layout, s.dict, s.cam);
  const SynthSequence seq =
      generate_trajectory(s.layout, s.dict, s.cam, 12, 10.0, NoiseModel{1.0, 0.1, 0, 44}, 44);
  const auto serial = tracker.track_sequence(seq.frames, 1);
  const auto parallel = tracker.track_sequence(seq.frames, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].frame == static_cast<int>(i));
    CHECK(serial[i].status == parallel[i].status);
    if (serial[i].final_pose)
      CHECK(serial[i].final_pose->translation == parallel[i].final_pose->translation);
  }
}

TEST_CASE("track status names round trip") {
  for (auto s : {TrackStatus::Tracked, TrackStatus::RejectedAllFaces, TrackStatus::NoDetections})
    CHECK(track_status_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(track_status_from_string("lost"), std::invalid_argument);
}

TEST_CASE("pipeline config validation") {
  PipelineConfig c;
  c.ssim_window = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.ssim_threshold = 2.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_NOTHROW(PipelineConfig{}.validate());
}
