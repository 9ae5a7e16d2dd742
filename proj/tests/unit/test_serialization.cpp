#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cubetrack/errors.hpp"
#include "cubetrack/serialization.hpp"

using namespace cubetrack;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cubetrack_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("layout file round trip") {
  const fs::path dir = scratch("layout");
  const CubeLayout layout = CubeLayout::make(0.1, 0.04, 0.006);
  write_layout(dir / "layout.json", layout, 11);
  const LayoutFile back = read_layout(dir / "layout.json");
  CHECK(back.layout.side_m == 0.1);
  CHECK(back.dictionary_seed == 11);
  CHECK(back.layout.marker_ids() == layout.marker_ids());
  CHECK(back.dictionary().patterns()[3].code == generate_dictionary(16, 11).patterns()[3].code);
}

TEST_CASE("layout file with moved markers is rejected") {
  const fs::path dir = scratch("layout_bad");
  write_layout(dir / "layout.json", CubeLayout::make());
  nlohmann::json j = nlohmann::json::parse(std::ifstream(dir / "layout.json"));
  j["faces"][0]["markers"][0]["corners"][0][1] = j["faces"][0]["markers"][0]["corners"][0][1].get<double>() + 0.002;
  std::ofstream(dir / "layout.json") << j.dump();
  CHECK_THROWS_AS(read_layout(dir / "layout.json"), SchemaViolation);
  CHECK_THROWS_AS(read_layout(dir / "missing.json"), SchemaViolation);
}

TEST_CASE("camera file round trip") {
  const fs::path dir = scratch("camera");
  CameraIntrinsics cam = default_camera();
  cam.k1 = -0.125;
  write_camera(dir / "camera.json", cam);
  const CameraIntrinsics back = read_camera(dir / "camera.json");
  CHECK(back.fx == cam.fx);
  CHECK(back.k1 == cam.k1);
  CHECK(back.width == cam.width);
  std::ofstream(dir / "bad.json") << "{\"fx\": -1}";
  CHECK_THROWS_AS(read_camera(dir / "bad.json"), SchemaViolation);
}

TEST_CASE("frame directory round trip") {
  const fs::path dir = scratch("frames");
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(16, kDefaultDictionarySeed);
  const SynthSequence seq =
      generate_trajectory(layout, dict, default_camera(), 3, 10.0, NoiseModel{1.0, 0.0, 0, 3}, 3);
  write_frame_directory(dir, seq);
  CHECK(fs::exists(dir / frame_image_name(2)));
  const FrameDirectory back = read_frame_directory(dir);
  CHECK(back.has_observations);
  REQUIRE(back.frames.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.frames[i].image == seq.frames[i].image);
    CHECK(back.frames[i].t_s == seq.frames[i].t_s);
    REQUIRE(back.frames[i].observations.size() == seq.frames[i].observations.size());
    CHECK(back.frames[i].observations[0].corners[2] == seq.frames[i].observations[0].corners[2]);
  }
  fs::remove(dir / kObservationsFile);
  const FrameDirectory images_only = read_frame_directory(dir);
  CHECK_FALSE(images_only.has_observations);
  CHECK(images_only.frames.size() == 3);
  CHECK_THROWS_AS(read_frame_directory(scratch("empty")), SchemaViolation);
}

TEST_CASE("frame image names") { CHECK(frame_image_name(42) == "frame_000042.pgm"); }

TEST_CASE("results line contains nulls for missing poses") {
  FrameResult r;
  r.frame = 7;
  std::stringstream ss;
  write_frame_result(ss, r);
  const std::string line = ss.str();
  CHECK(line.find("\"frame\":7") != std::string::npos);
  CHECK(line.find("\"status\":\"NoDetections\"") != std::string::npos);
  CHECK(line.find("\"final_pose\":null") != std::string::npos);
}

TEST_CASE("pgm round trip") {
  const fs::path dir = scratch("pgm");
  GrayImage img(17, 9, 0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) img.at(x, y) = static_cast<std::uint8_t>(x * 15 + y);
  write_pgm(dir / "a.pgm", img);
  CHECK(read_pgm(dir / "a.pgm") == img);
}
