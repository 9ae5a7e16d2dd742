#include "cubetrack/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cubetrack/errors.hpp"

namespace cubetrack {

using ordered_json = nlohmann::ordered_json;

void Episode::validate() const {
  if (samples.size() < 2) throw std::invalid_argument("episode needs at least two samples");
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw std::invalid_argument("rate_hz must be positive");
  if (frame != "camera" && frame != "world") throw std::invalid_argument("frame must be camera or world");
  std::vector<double> dts;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!std::isfinite(s.t)) throw std::invalid_argument("non-finite timestamp");
    if (!(s.actuation >= 0.0 && s.actuation <= 1.0)) throw std::invalid_argument("actuation outside [0, 1]");
    if (i > 0) {
      if (!(s.t > samples[i - 1].t)) throw std::invalid_argument("timestamps must strictly increase");
      dts.push_back(s.t - samples[i - 1].t);
    }
  }
  std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
  const double median = dts[dts.size() / 2];
  const double period = 1.0 / rate_hz;
  if (std::abs(median - period) > 0.2 * period)
    throw std::invalid_argument("median sample spacing " + std::to_string(median) + " s is not within 20% of " +
                                std::to_string(period) + " s");
}

std::vector<std::pair<std::size_t, std::size_t>> associate(const Episode& a, const Episode& b) {
  if (a.samples.size() != b.samples.size())
    throw LengthMismatch(std::to_string(a.samples.size()) + " vs " + std::to_string(b.samples.size()) + " samples");
  const double tolerance = 0.5 / std::max(a.rate_hz, b.rate_hz);
  std::vector<double> tb(b.samples.size());
  std::transform(b.samples.begin(), b.samples.end(), tb.begin(), [](const auto& s) { return s.t; });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(a.samples.size());
  std::vector<bool> used(tb.size(), false);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double t = a.samples[i].t;
    const auto it = std::lower_bound(tb.begin(), tb.end(), t);
    std::size_t j = static_cast<std::size_t>(it - tb.begin());
    if (j == tb.size() || (j > 0 && t - tb[j - 1] <= tb[j] - t)) --j;
    if (std::abs(tb[j] - t) > tolerance)
      throw TimestampGap("sample " + std::to_string(i) + " at t=" + std::to_string(t) + " s has no partner within " +
                         std::to_string(tolerance) + " s");
    if (used[j]) throw TimestampGap("sample " + std::to_string(j) + " of the second episode matched twice");
    used[j] = true;
    pairs.emplace_back(i, j);
  }
  return pairs;
}

double mse_position(const Episode& a, const Episode& b) {
  const auto pairs = associate(a, b);
  double sum = 0.0;
  for (const auto& [i, j] : pairs)
    sum += (a.samples[i].pose.translation - b.samples[j].pose.translation).squaredNorm();
  return sum / static_cast<double>(pairs.size());
}

const char* to_string(RotationConvention convention) {
  return convention == RotationConvention::PerAxis ? "per-axis" : "geodesic";
}

RotationConvention rotation_convention_from_string(const std::string& name) {
  if (name == "per-axis") return RotationConvention::PerAxis;
  if (name == "geodesic") return RotationConvention::Geodesic;
  throw std::invalid_argument("unknown rotation convention '" + name + "'");
}

double mse_rotation(const Episode& a, const Episode& b, RotationConvention convention) {
  const auto pairs = associate(a, b);
  double sum = 0.0;
  for (const auto& [i, j] : pairs) {
    const Quat& qa = a.samples[i].pose.rotation;
    const Quat& qb = b.samples[j].pose.rotation;
    if (convention == RotationConvention::PerAxis) {
      sum += (so3_log(qa) - so3_log(qb)).squaredNorm() / 3.0;
    } else {
      const double angle = rotation_geodesic(qa, qb);
      sum += angle * angle;
    }
  }
  return sum / static_cast<double>(pairs.size());
}

Pose screw_interpolate(const Pose& from, const Pose& to, double s) {
  const Eigen::Matrix<double, 6, 1> xi = se3_log(invert(from) * to);
  return from * se3_exp(s * xi);
}

double actuation_from_tag(const Pose& tag_pose, const ActuationCalibration& calib) {
  const Pose span = invert(calib.open_ref) * calib.closed_ref;
  const Pose rel = invert(calib.open_ref) * tag_pose;
  const double gap = span.translation.norm();
  double s = 0.0;
  if (gap > 1e-3) {
    s = rel.translation.dot(span.translation) / (gap * gap);
  } else {
    const Vec3 axis = so3_log(span.rotation);
    const double angle = axis.norm();
    if (!(angle > 0.01))
      throw DegenerateCalibration("open and closed references are " + std::to_string(gap * 1e3) + " mm and " +
                                  std::to_string(angle) + " rad apart");
    s = so3_log(rel.rotation).dot(axis) / (angle * angle);
  }
  return std::clamp(s, 0.0, 1.0);
}

void ConfusionCounts::validate() const {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw std::invalid_argument("confusion counts must be non-negative");
}

namespace {

double ratio(std::int64_t num, std::int64_t den, const char* name) {
  if (den == 0) throw UndefinedMetric(std::string(name) + " has a zero denominator");
  return static_cast<double>(num) / static_cast<double>(den);
}

template <typename Fn>
std::optional<double> defined(Fn&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

}  // namespace

double accuracy(const ConfusionCounts& c) {
  c.validate();
  return ratio(c.tp + c.tn, c.total(), "accuracy");
}

double precision(const ConfusionCounts& c) {
  c.validate();
  return ratio(c.tp, c.tp + c.fp, "precision");
}

double recall(const ConfusionCounts& c) {
  c.validate();
  return ratio(c.tp, c.tp + c.fn, "recall");
}

double f1_score(const ConfusionCounts& c) {
  const double p = precision(c);
  const double r = recall(c);
  if (p + r == 0.0) throw UndefinedMetric("f1 has a zero denominator");
  return 2.0 * p * r / (p + r);
}

ClassifierMetrics classifier_metrics(const ConfusionCounts& c) {
  c.validate();
  return {defined([&] { return accuracy(c); }), defined([&] { return precision(c); }),
          defined([&] { return recall(c); }), defined([&] { return f1_score(c); })};
}

void write_episode(std::ostream& out, const Episode& episode) {
  episode.validate();
  ordered_json header;
  header["episode"] = episode.id;
  header["rate_hz"] = episode.rate_hz;
  header["frame"] = episode.frame;
  out << header.dump() << '\n';
  for (const auto& s : episode.samples) {
    const Quat& q = s.pose.rotation;
    const Vec3& p = s.pose.translation;
    ordered_json line;
    line["t"] = s.t;
    line["q"] = {q.w(), q.x(), q.y(), q.z()};
    line["p"] = {p.x(), p.y(), p.z()};
    line["a"] = s.actuation;
    out << line.dump() << '\n';
  }
}

void write_episode(const std::filesystem::path& path, const Episode& episode) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_episode(out, episode);
}

namespace {

double finite_number(const ordered_json& v, const std::string& source, int line, const char* key) {
  if (!v.is_number()) throw SchemaViolation(source, line, std::string("'") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaViolation(source, line, std::string("'") + key + "' must be finite");
  return d;
}

template <std::size_t N>
std::array<double, N> number_array(const ordered_json& obj, const std::string& source, int line, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_array() || it->size() != N)
    throw SchemaViolation(source, line, std::string("'") + key + "' must be an array of " + std::to_string(N) +
                                            " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = finite_number((*it)[i], source, line, key);
  return out;
}

void require_keys(const ordered_json& obj, const std::set<std::string>& keys, const std::string& source, int line) {
  if (!obj.is_object()) throw SchemaViolation(source, line, "expected a JSON object");
  for (const auto& key : keys)
    if (!obj.contains(key)) throw SchemaViolation(source, line, "missing key '" + key + "'");
  for (const auto& [key, value] : obj.items())
    if (!keys.count(key)) throw SchemaViolation(source, line, "unexpected key '" + key + "'");
}

}  // namespace

Episode read_episode(std::istream& in, const std::string& source) {
  Episode episode;
  std::string text;
  int line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) throw SchemaViolation(source, line, "blank line");
    ordered_json obj;
    try {
      obj = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaViolation(source, line, std::string("invalid JSON: ") + e.what());
    }
    if (!have_header) {
      require_keys(obj, {"episode", "rate_hz", "frame"}, source, line);
      if (!obj["episode"].is_string()) throw SchemaViolation(source, line, "'episode' must be a string");
      if (!obj["frame"].is_string()) throw SchemaViolation(source, line, "'frame' must be a string");
      episode.id = obj["episode"].get<std::string>();
      episode.rate_hz = finite_number(obj["rate_hz"], source, line, "rate_hz");
      episode.frame = obj["frame"].get<std::string>();
      if (!(episode.rate_hz > 0.0)) throw SchemaViolation(source, line, "'rate_hz' must be positive");
      if (episode.frame != "camera" && episode.frame != "world")
        throw SchemaViolation(source, line, "'frame' must be \"camera\" or \"world\"");
      have_header = true;
      continue;
    }
    require_keys(obj, {"t", "q", "p", "a"}, source, line);
    TrajectorySample s;
    s.t = finite_number(obj["t"], source, line, "t");
    const auto q = number_array<4>(obj, source, line, "q");
    const auto p = number_array<3>(obj, source, line, "p");
    s.actuation = finite_number(obj["a"], source, line, "a");
    if (!(s.actuation >= 0.0 && s.actuation <= 1.0))
      throw SchemaViolation(source, line, "'a' = " + std::to_string(s.actuation) + " is outside [0, 1]");
    if (!episode.samples.empty() && !(s.t > episode.samples.back().t))
      throw SchemaViolation(source, line, "timestamp does not increase");
    const Quat quat(q[0], q[1], q[2], q[3]);
    if (std::abs(quat.norm() - 1.0) > 1e-6) throw SchemaViolation(source, line, "'q' is not a unit quaternion");
    s.pose.rotation = quat;
    s.pose.translation = Vec3(p[0], p[1], p[2]);
    episode.samples.push_back(s);
  }
  if (!have_header) throw SchemaViolation(source, 0, "missing header line");
  try {
    episode.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaViolation(source, 0, e.what());
  }
  return episode;
}

Episode read_episode(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaViolation(path.string(), 0, "cannot open file");
  return read_episode(in, path.string());
}

Episode episode_from_poses(const std::string& id, const std::vector<Pose>& poses, double rate_hz,
                           const std::string& frame) {
  Episode e;
  e.id = id;
  e.rate_hz = rate_hz;
  e.frame = frame;
  e.samples.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i)
    e.samples.push_back({static_cast<double>(i) / rate_hz, poses[i], 0.0});
  return e;
}

}  // namespace cubetrack
