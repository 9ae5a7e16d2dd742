#include "cubetrack/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "cubetrack/errors.hpp"

namespace cubetrack {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json parse_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaViolation(path.string(), 0, "cannot open file");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaViolation(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
}

void write_file(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

template <std::size_t N>
ordered_json array_json(const Eigen::Matrix<double, static_cast<int>(N), 1>& v) {
  ordered_json a = ordered_json::array();
  for (std::size_t i = 0; i < N; ++i) a.push_back(v[static_cast<Eigen::Index>(i)]);
  return a;
}

ordered_json pose_json(const Pose& p) {
  const Quat& q = p.rotation;
  return {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", array_json<3>(p.translation)}};
}

template <int N>
Eigen::Matrix<double, N, 1> read_vector(const ordered_json& j, const std::string& source, int line,
                                        const std::string& what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    throw SchemaViolation(source, line, what + " must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number() || !std::isfinite(j[i].get<double>()))
      throw SchemaViolation(source, line, what + " must hold finite numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

const ordered_json& member(const ordered_json& j, const char* key, const std::string& source, int line) {
  if (!j.is_object()) throw SchemaViolation(source, line, "expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaViolation(source, line, std::string("missing key '") + key + "'");
  return *it;
}

double number(const ordered_json& j, const char* key, const std::string& source, int line) {
  const auto& v = member(j, key, source, line);
  if (!v.is_number() || !std::isfinite(v.get<double>()))
    throw SchemaViolation(source, line, std::string("'") + key + "' must be a finite number");
  return v.get<double>();
}

int integer(const ordered_json& j, const char* key, const std::string& source, int line) {
  const auto& v = member(j, key, source, line);
  if (!v.is_number_integer()) throw SchemaViolation(source, line, std::string("'") + key + "' must be an integer");
  return v.get<int>();
}

Pose read_pose(const ordered_json& j, const std::string& source, int line) {
  const Eigen::Vector4d q = read_vector<4>(member(j, "q", source, line), source, line, "'q'");
  if (q.norm() < 1e-12) throw SchemaViolation(source, line, "'q' must be non-zero");
  return {Quat(q[0], q[1], q[2], q[3]), read_vector<3>(member(j, "t", source, line), source, line, "'t'")};
}

}  // namespace

Dictionary LayoutFile::dictionary() const {
  return generate_dictionary(static_cast<int>(layout.marker_ids().size()), dictionary_seed);
}

void write_layout(const fs::path& path, const CubeLayout& layout, std::uint64_t dictionary_seed) {
  ordered_json j;
  j["side_m"] = layout.side_m;
  j["marker_m"] = layout.marker_m;
  j["margin_m"] = layout.margin_m;
  j["dictionary_seed"] = dictionary_seed;
  ordered_json faces = ordered_json::array();
  for (const auto& f : layout.faces) {
    ordered_json markers = ordered_json::array();
    for (const auto& m : f.markers) {
      ordered_json corners = ordered_json::array();
      for (const auto& c : m.corners) corners.push_back(array_json<3>(c));
      markers.push_back({{"id", m.id}, {"corners", corners}});
    }
    faces.push_back({{"face", f.face}, {"markers", markers}});
  }
  j["faces"] = faces;
  write_file(path, j);
}

LayoutFile read_layout(const fs::path& path) {
  const std::string src = path.string();
  const ordered_json j = parse_file(path);
  LayoutFile out;
  try {
    out.layout = CubeLayout::make(number(j, "side_m", src, 0), number(j, "marker_m", src, 0),
                                  number(j, "margin_m", src, 0));
  } catch (const std::invalid_argument& e) {
    throw SchemaViolation(src, 0, e.what());
  }
  if (j.contains("dictionary_seed")) {
    if (!j["dictionary_seed"].is_number_unsigned())
      throw SchemaViolation(src, 0, "'dictionary_seed' must be a non-negative integer");
    out.dictionary_seed = j["dictionary_seed"].get<std::uint64_t>();
  }
  const auto& faces = member(j, "faces", src, 0);
  if (!faces.is_array() || faces.size() != out.layout.faces.size())
    throw SchemaViolation(src, 0, "'faces' must list " + std::to_string(out.layout.faces.size()) + " faces");
  for (const auto& fj : faces) {
    const int index = integer(fj, "face", src, 0);
    if (index < 0 || index >= static_cast<int>(out.layout.faces.size()))
      throw SchemaViolation(src, 0, "face index " + std::to_string(index) + " out of range");
    const FaceLayout& expected = out.layout.face(index);
    const auto& markers = member(fj, "markers", src, 0);
    if (!markers.is_array() || markers.size() != expected.markers.size())
      throw SchemaViolation(src, 0, "face " + std::to_string(index) + " must carry " +
                                        std::to_string(expected.markers.size()) + " markers");
    for (std::size_t m = 0; m < markers.size(); ++m) {
      const MarkerPlacement& em = expected.markers[m];
      if (integer(markers[m], "id", src, 0) != em.id)
        throw SchemaViolation(src, 0, "face " + std::to_string(index) + " marker " + std::to_string(m) +
                                          " should have id " + std::to_string(em.id));
      const auto& corners = member(markers[m], "corners", src, 0);
      if (!corners.is_array() || corners.size() != 4)
        throw SchemaViolation(src, 0, "marker " + std::to_string(em.id) + " needs four corners");
      for (int c = 0; c < 4; ++c) {
        const Vec3 p = read_vector<3>(corners[c], src, 0, "corner");
        if ((p - em.corners[c]).norm() > 1e-9)
          throw SchemaViolation(src, 0, "marker " + std::to_string(em.id) + " corner " + std::to_string(c) +
                                            " does not match the cube geometry");
      }
    }
  }
  return out;
}

void write_camera(const fs::path& path, const CameraIntrinsics& cam) {
  ordered_json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["k1"] = cam.k1;
  j["k2"] = cam.k2;
  j["width"] = cam.width;
  j["height"] = cam.height;
  write_file(path, j);
}

CameraIntrinsics read_camera(const fs::path& path) {
  const std::string src = path.string();
  const ordered_json j = parse_file(path);
  CameraIntrinsics cam;
  cam.fx = number(j, "fx", src, 0);
  cam.fy = number(j, "fy", src, 0);
  cam.cx = number(j, "cx", src, 0);
  cam.cy = number(j, "cy", src, 0);
  cam.k1 = j.contains("k1") ? number(j, "k1", src, 0) : 0.0;
  cam.k2 = j.contains("k2") ? number(j, "k2", src, 0) : 0.0;
  cam.width = integer(j, "width", src, 0);
  cam.height = integer(j, "height", src, 0);
  try {
    cam.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaViolation(src, 0, e.what());
  }
  return cam;
}

std::string frame_image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.pgm", index);
  return buf;
}

void write_frame_directory(const fs::path& dir, const SynthSequence& sequence) {
  fs::create_directories(dir);
  std::ofstream obs(dir / kObservationsFile, std::ios::binary);
  if (!obs) throw std::runtime_error("cannot write " + (dir / kObservationsFile).string());
  for (const auto& f : sequence.frames) {
    if (!f.image.empty()) write_pgm(dir / frame_image_name(f.index), f.image);
    ordered_json line;
    line["frame"] = f.index;
    line["t_s"] = f.t_s;
    line["true_pose"] = pose_json(f.true_pose);
    ordered_json list = ordered_json::array();
    for (const auto& o : f.observations) {
      ordered_json corners = ordered_json::array();
      for (const auto& c : o.corners) corners.push_back(array_json<2>(c));
      list.push_back({{"id", o.id}, {"corners", corners}});
    }
    line["obs"] = list;
    obs << line.dump() << '\n';
  }
}

FrameDirectory read_frame_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw SchemaViolation(dir.string(), 0, "not a directory");
  FrameDirectory out;
  const fs::path obs_path = dir / kObservationsFile;
  if (fs::exists(obs_path)) {
    out.has_observations = true;
    const std::string src = obs_path.string();
    std::ifstream in(obs_path, std::ios::binary);
    if (!in) throw SchemaViolation(src, 0, "cannot open file");
    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.empty()) continue;
      ordered_json j;
      try {
        j = ordered_json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaViolation(src, line, std::string("invalid JSON: ") + e.what());
      }
      SynthFrame f;
      f.index = integer(j, "frame", src, line);
      f.t_s = number(j, "t_s", src, line);
      if (j.contains("true_pose") && !j["true_pose"].is_null()) f.true_pose = read_pose(j["true_pose"], src, line);
      const auto& list = member(j, "obs", src, line);
      if (!list.is_array()) throw SchemaViolation(src, line, "'obs' must be an array");
      for (const auto& oj : list) {
        MarkerObservation o;
        o.id = integer(oj, "id", src, line);
        const auto& corners = member(oj, "corners", src, line);
        if (!corners.is_array() || corners.size() != 4)
          throw SchemaViolation(src, line, "marker " + std::to_string(o.id) + " needs four corners");
        for (int c = 0; c < 4; ++c) o.corners[c] = read_vector<2>(corners[c], src, line, "corner");
        f.observations.push_back(o);
      }
      if (!out.frames.empty() && f.index <= out.frames.back().index)
        throw SchemaViolation(src, line, "frame indices must increase");
      const fs::path image = dir / frame_image_name(f.index);
      if (!fs::exists(image)) throw SchemaViolation(src, line, "missing image " + image.filename().string());
      f.image = read_pgm(image);
      out.frames.push_back(std::move(f));
    }
  } else {
    std::map<int, fs::path> images;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      int index = 0;
      char tail = 0;
      if (name.size() == 16 && std::sscanf(name.c_str(), "frame_%6d.pg%c", &index, &tail) == 2 && tail == 'm')
        images[index] = entry.path();
    }
    for (const auto& [index, path] : images) {
      SynthFrame f;
      f.index = index;
      f.image = read_pgm(path);
      out.frames.push_back(std::move(f));
    }
  }
  if (out.frames.empty()) throw SchemaViolation(dir.string(), 0, "no frames found");
  return out;
}

void write_frame_result(std::ostream& out, const FrameResult& r) {
  ordered_json j;
  j["frame"] = r.frame;
  j["status"] = to_string(r.status);
  j["initial_pose"] = r.initial_pose ? pose_json(*r.initial_pose) : ordered_json(nullptr);
  j["final_pose"] = r.final_pose ? pose_json(*r.final_pose) : ordered_json(nullptr);
  ordered_json faces = ordered_json::array();
  for (const auto& f : r.faces) faces.push_back({{"face", f.face}, {"ssim", f.ssim}, {"accepted", f.accepted}});
  j["faces"] = faces;
  out << j.dump() << '\n';
}

}  // namespace cubetrack
