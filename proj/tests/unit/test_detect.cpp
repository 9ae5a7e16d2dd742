#include <doctest.h>

#include <map>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/detect.hpp"
#include "cubetrack/synth.hpp"

using namespace cubetrack;

TEST_CASE("detector finds every rendered marker with sub-pixel corners") {
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(16, kDefaultDictionarySeed);
  const CameraIntrinsics cam = default_camera();
  const auto poses = sample_trajectory_poses(layout, cam, 20, 10.0, 21);
  for (int i = 0; i < 20; ++i) {
    const SynthFrame f = render_frame(layout, dict, poses[i], cam, NoiseModel{}, i);
    const auto found = detect_markers(f.image, dict);
    std::map<int, MarkerObservation> by_id;
    for (const auto& o : found) by_id[o.id] = o;
    CHECK(by_id.size() == found.size());
    for (const auto& truth : f.observations) {
      const auto it = by_id.find(truth.id);
      REQUIRE_MESSAGE(it != by_id.end(), "frame " << i << " missed marker " << truth.id);
      for (int k = 0; k < 4; ++k) CHECK((it->second.corners[k] - truth.corners[k]).norm() < 0.5);
    }
  }
}

TEST_CASE("blank and uniform images yield no detections") {
  const Dictionary dict = generate_dictionary(16, kDefaultDictionarySeed);
  CHECK(detect_markers(GrayImage(320, 240, 0), dict).empty());
  CHECK(detect_markers(GrayImage(320, 240, 200), dict).empty());
}

TEST_CASE("detection is invariant to 90 degree image rotation") {
  const Dictionary dict = generate_dictionary(16, kDefaultDictionarySeed);
  GrayImage canvas(200, 200, 255);
  const GrayImage marker = render_marker(dict.patterns()[5], 12, 0);
  for (int y = 0; y < marker.height; ++y)
    for (int x = 0; x < marker.width; ++x) canvas.at(40 + x, 50 + y) = marker.at(x, y);
  GrayImage img = canvas;
  for (int r = 0; r < 4; ++r) {
    const auto found = detect_markers(img, dict);
    REQUIRE(found.size() == 1);
    CHECK(found[0].id == 5);
    img = rotate90_clockwise(img);
  }
}

TEST_CASE("adaptive threshold marks dark pixels") {
  GrayImage img(60, 60, 200);
  for (int y = 20; y < 40; ++y)
    for (int x = 20; x < 40; ++x) img.at(x, y) = 20;
  const auto mask = adaptive_threshold(img, 31, 5);
  CHECK(mask[30 * 60 + 30] != 0);
  CHECK(mask[5 * 60 + 5] == 0);
}
