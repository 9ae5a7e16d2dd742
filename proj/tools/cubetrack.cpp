#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cubetrack/bench.hpp"
#include "cubetrack/ddpm.hpp"
#include "cubetrack/detect.hpp"
#include "cubetrack/errors.hpp"
#include "cubetrack/robust_track.hpp"
#include "cubetrack/serialization.hpp"
#include "cubetrack/synth.hpp"
#include "cubetrack/trajectory.hpp"

namespace fs = std::filesystem;
using namespace cubetrack;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitQuality = 1;
constexpr int kExitUsage = 2;

/// Reads a flat JSON object of option values for the selected subcommand;
/// command-line flags win.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    ordered_json j;
    try {
      j = ordered_json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      for (const CLI::App* sub : root_->get_subcommands()) item.parents = {sub->get_name()};
      auto text = [](const ordered_json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(text(v));
      } else {
        item.inputs.push_back(text(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

/// Resolved option values of a subcommand, flags and config file merged.
ordered_json resolved_options(const CLI::App& app) {
  ordered_json j;
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      j[name] = results.size() == 1 ? ordered_json(results.front()) : ordered_json(results);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_manifest(const fs::path& out_dir, const CLI::App& app, std::uint64_t seed) {
  fs::create_directories(out_dir);
  ordered_json m;
  m["tool"] = "cubetrack";
  m["version"] = kToolVersion;
  m["subcommand"] = app.get_name();
  m["seed"] = seed;
  m["config"] = resolved_options(app);
  m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                    {"cli11", CLI11_VERSION}};
  auto out = open_out(out_dir / "manifest.json");
  out << m.dump(1) << '\n';
}

Eigen::VectorXd parse_vector(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    values.push_back(std::stod(item, &used));
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  int frames = 10;
  double sigma = 0.0;
  double dropout = 0.0;
  int blur = 0;
  std::uint64_t seed = 1;
  double rate = 10.0;
  std::string out;
};

int run_synth(const SynthArgs& a, const CLI::App& app) {
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(static_cast<int>(layout.marker_ids().size()), kDefaultDictionarySeed);
  const CameraIntrinsics cam = default_camera();
  const NoiseModel noise{a.sigma, a.dropout, a.blur, a.seed};
  noise.validate();
  const fs::path out(a.out);
  write_manifest(out, app, a.seed);
  const SynthSequence seq = generate_trajectory(layout, dict, cam, a.frames, a.rate, noise, a.seed);
  write_layout(out / "layout.json", layout, kDefaultDictionarySeed);
  write_camera(out / "camera.json", cam);
  write_frame_directory(out, seq);
  const Episode truth = episode_from_poses("truth-seed-" + std::to_string(a.seed), seq.truth(), a.rate);
  write_episode(out / "truth_episode.jsonl", truth);
  std::cout << "wrote " << seq.frames.size() << " frames to " << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- synth-bench

struct BenchArgs {
  BenchConfig config;
  std::string out;
};

void pose_columns(std::ostream& out, const std::optional<Pose>& p) {
  if (!p) {
    out << ",,,,,,";
    return;
  }
  const Vec3 w = so3_log(p->rotation);
  out << ',' << num(p->translation.x()) << ',' << num(p->translation.y()) << ',' << num(p->translation.z()) << ','
      << num(w.x()) << ',' << num(w.y()) << ',' << num(w.z());
}

int run_synth_bench(const BenchArgs& a, const CLI::App& app) {
  const BenchConfig& cfg = a.config;
  cfg.validate();
  const fs::path out(a.out);
  write_manifest(out, app, cfg.first_seed);
  const CubeLayout layout = CubeLayout::make();
  const Dictionary dict = generate_dictionary(static_cast<int>(layout.marker_ids().size()), kDefaultDictionarySeed);

  auto per_seed = open_out(out / "per_seed.csv");
  auto poses = open_out(out / "poses.csv");
  per_seed << "seed,frames,tracked_fraction,mse_position_raw,mse_position_refined,mse_rotation_raw_per_axis,"
              "mse_rotation_refined_per_axis,mse_rotation_raw_geodesic,mse_rotation_refined_geodesic\n";
  poses << "seed,frame,t_s,status";
  for (const char* who : {"truth", "raw", "refined"})
    for (const char* c : {"x", "y", "z", "rx", "ry", "rz"}) poses << ',' << who << '_' << c;
  poses << '\n';

  std::vector<SeedReport> reports;
  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = cfg.first_seed + static_cast<std::uint64_t>(s);
    SeedReport r = run_bench_seed(cfg, seed, layout, dict);
    per_seed << seed << ',' << r.frames.size() << ',' << num(r.tracked_fraction) << ',' << num(r.mse_position_raw)
             << ',' << num(r.mse_position_refined) << ',' << num(r.mse_rotation_raw_per_axis) << ','
             << num(r.mse_rotation_refined_per_axis) << ',' << num(r.mse_rotation_raw_geodesic) << ','
             << num(r.mse_rotation_refined_geodesic) << '\n';
    for (const auto& f : r.frames) {
      poses << seed << ',' << f.frame << ',' << num(f.t_s) << ',' << to_string(f.status);
      pose_columns(poses, f.truth);
      pose_columns(poses, f.raw);
      pose_columns(poses, f.refined);
      poses << '\n';
    }
    std::cout << "seed " << seed << ": tracked " << r.tracked << "/" << r.frames.size() << ", position MSE raw "
              << num(r.mse_position_raw) << " refined " << num(r.mse_position_refined) << "\n";
    r.frames.clear();
    reports.push_back(std::move(r));
  }

  const BenchSummary sum = summarize(reports);
  auto agg = open_out(out / "aggregate.csv");
  agg << "metric,convention,value\n";
  agg << "seeds,,"  << sum.seeds << '\n';
  agg << "frames_per_seed,," << cfg.frames << '\n';
  agg << "sigma_px,," << num(cfg.sigma) << '\n';
  agg << "tracked_fraction,," << num(sum.tracked_fraction) << '\n';
  agg << "mse_position_raw,euclidean," << num(sum.mse_position_raw) << '\n';
  agg << "mse_position_refined,euclidean," << num(sum.mse_position_refined) << '\n';
  agg << "mse_position_ratio,euclidean," << num(sum.position_ratio()) << '\n';
  agg << "mse_rotation_raw,per-axis," << num(sum.mse_rotation_raw_per_axis) << '\n';
  agg << "mse_rotation_refined,per-axis," << num(sum.mse_rotation_refined_per_axis) << '\n';
  agg << "mse_rotation_ratio,per-axis," << num(sum.rotation_ratio_per_axis()) << '\n';
  agg << "mse_rotation_raw,geodesic," << num(sum.mse_rotation_raw_geodesic) << '\n';
  agg << "mse_rotation_refined,geodesic," << num(sum.mse_rotation_refined_geodesic) << '\n';
  agg << "mse_rotation_ratio,geodesic," << num(sum.rotation_ratio_geodesic()) << '\n';

  std::cout << "aggregate over " << sum.seeds << " seeds: tracked " << num(sum.tracked_fraction)
            << ", position MSE raw " << num(sum.mse_position_raw) << " refined " << num(sum.mse_position_refined)
            << " (ratio " << num(sum.position_ratio()) << "), rotation MSE per-axis raw "
            << num(sum.mse_rotation_raw_per_axis) << " refined " << num(sum.mse_rotation_refined_per_axis)
            << " (ratio " << num(sum.rotation_ratio_per_axis()) << ")\n";
  if (cfg.sigma >= 2.0 && !(sum.mse_position_refined < sum.mse_position_raw)) {
    std::cerr << "refined position MSE is not below raw PnP at sigma " << cfg.sigma << "\n";
    return kExitQuality;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- track

struct TrackArgs {
  std::string frames;
  std::string layout;
  std::string cam;
  std::string out;
  int threads = 1;
  bool detect = false;
};

int run_track(const TrackArgs& a, const CLI::App& app) {
  const LayoutFile lf = read_layout(a.layout);
  const CameraIntrinsics cam = read_camera(a.cam);
  FrameDirectory dir = read_frame_directory(a.frames);
  const Dictionary dict = lf.dictionary();
  const fs::path out(a.out);
  write_manifest(out, app, 0);

  const bool detect = a.detect || !dir.has_observations;
  if (detect)
    for (auto& f : dir.frames) f.observations = detect_markers(f.image, dict);
  for (const auto& f : dir.frames)
    if (f.image.width != cam.width || f.image.height != cam.height)
      throw SchemaViolation((fs::path(a.frames) / frame_image_name(f.index)).string(), 0,
                            "image size does not match the camera");
  const Tracker tracker(lf.layout, dict, cam);
  const std::vector<FrameResult> results = tracker.track_sequence(dir.frames, a.threads);

  auto res = open_out(out / "results.jsonl");
  std::map<std::string, int> counts = {{"Tracked", 0}, {"RejectedAllFaces", 0}, {"NoDetections", 0}};
  for (const auto& r : results) {
    write_frame_result(res, r);
    ++counts[to_string(r.status)];
  }
  auto summary = open_out(out / "summary.csv");
  summary << "status,count\n";
  std::cout << "frames " << results.size() << " (" << (detect ? "detected" : "supplied") << " markers):";
  for (const auto& [status, n] : counts) {
    summary << status << ',' << n << '\n';
    std::cout << ' ' << status << '=' << n;
  }
  std::cout << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval-traj

struct EvalArgs {
  std::string a;
  std::string b;
  std::string rot = "per-axis";
  std::string out;
};

int run_eval_traj(const EvalArgs& a) {
  const RotationConvention conv = rotation_convention_from_string(a.rot);
  const Episode ea = read_episode(fs::path(a.a));
  const Episode eb = read_episode(fs::path(a.b));
  const double pos = mse_position(ea, eb);
  const double rot = mse_rotation(ea, eb, conv);
  std::ostringstream csv;
  csv << "metric,convention,value\n";
  csv << "mse_position,euclidean," << num(pos) << '\n';
  csv << "mse_rotation," << to_string(conv) << ',' << num(rot) << '\n';
  std::cout << csv.str();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    auto out = open_out(fs::path(a.out) / "metrics.csv");
    out << csv.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ddpm-demo

struct DdpmArgs {
  std::string dataset;
  std::string out;
  ddpm::TrainConfig train;
  int steps = 50;
  int samples = 1000;
  std::string obs;
};

/// The two dataset actions farthest apart, refined by two-means on the data.
std::pair<Eigen::VectorXd, Eigen::VectorXd> dataset_modes(const std::vector<ddpm::Example>& data) {
  auto farthest = [&](const Eigen::VectorXd& from) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < data.size(); ++i)
      if ((data[i].action - from).squaredNorm() > (data[best].action - from).squaredNorm()) best = i;
    return data[best].action;
  };
  const Eigen::VectorXd a = farthest(data.front().action);
  const Eigen::VectorXd b = farthest(a);
  std::vector<Eigen::VectorXd> actions;
  for (const auto& ex : data) actions.push_back(ex.action);
  const ddpm::BimodalityReport r = ddpm::bimodality_report(actions, a, b);
  return {r.center[0], r.center[1]};
}

int run_ddpm_demo(const DdpmArgs& a, const CLI::App& app) {
  const std::vector<ddpm::Example> data = ddpm::read_dataset(fs::path(a.dataset));
  const ddpm::DenoiseSchedule schedule = ddpm::DenoiseSchedule::linear(a.steps);
  const fs::path out(a.out);
  write_manifest(out, app, a.train.seed);

  const ddpm::TrainResult trained = ddpm::train_toy_policy(data, schedule, a.train);
  trained.model.save(out / "model.json");
  {
    auto loss = open_out(out / "loss.csv");
    loss << "epoch,loss\n";
    for (std::size_t e = 0; e < trained.loss_curve.size(); ++e) loss << e << ',' << num(trained.loss_curve[e]) << '\n';
  }

  const Eigen::VectorXd obs = a.obs.empty() ? data.front().obs : parse_vector(a.obs);
  if (obs.size() != data.front().obs.size()) throw std::invalid_argument("--obs has the wrong dimension");
  ddpm::Rng rng(a.train.seed + 1);
  std::vector<Eigen::VectorXd> draws;
  {
    auto samples = open_out(out / "samples.csv");
    samples << "index";
    for (int d = 0; d < trained.model.action_dim(); ++d) samples << ",a" << d;
    samples << '\n';
    for (int i = 0; i < a.samples; ++i) {
      draws.push_back(ddpm::sample(obs, trained.model, schedule, rng));
      samples << i;
      for (int d = 0; d < trained.model.action_dim(); ++d) samples << ',' << num(draws.back()[d]);
      samples << '\n';
    }
  }

  if (!draws.empty()) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(draws.front().size());
    for (const auto& v : draws) mean += v;
    mean /= static_cast<double>(draws.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (const auto& v : draws) var += (v - mean).cwiseAbs2();
    var /= static_cast<double>(draws.size());
    std::cout << "sample mean";
    for (Eigen::Index i = 0; i < mean.size(); ++i) std::cout << ' ' << num(mean[i]);
    std::cout << "; sample variance";
    for (Eigen::Index i = 0; i < var.size(); ++i) std::cout << ' ' << num(var[i]);
    std::cout << "; untrained-model variance " << num(ddpm::untrained_sample_variance(schedule)) << "\n";
  }

  const auto [mode_a, mode_b] = dataset_modes(data);
  const ddpm::BimodalityReport r = ddpm::bimodality_report(draws, mode_a, mode_b);
  auto report = open_out(out / "bimodality.csv");
  report << "cluster,mode,center,count,fraction,center_error\n";
  for (int c = 0; c < 2; ++c) {
    auto vec = [](const Eigen::VectorXd& v) {
      std::string s;
      for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i]);
      return s;
    };
    report << c << ',' << vec(c == 0 ? mode_a : mode_b) << ',' << vec(r.center[c]) << ',' << r.count[c] << ','
           << num(r.fraction[c]) << ',' << num(r.center_error[c]) << '\n';
  }
  report << "passed,,,,," << (r.passed ? "true" : "false") << '\n';
  std::cout << "final loss " << num(trained.loss_curve.empty() ? std::nan("") : trained.loss_curve.back())
            << "; clusters " << r.count[0] << " / " << r.count[1] << " (fractions " << fixed2(r.fraction[0])
            << ", " << fixed2(r.fraction[1]) << "), center errors " << num(r.center_error[0]) << ", "
            << num(r.center_error[1]) << "; bimodality " << (r.passed ? "PASS" : "FAIL") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

int run_metrics(const MetricsArgs& a) {
  const ConfusionCounts c{a.tp, a.fp, a.fn, a.tn};
  const ClassifierMetrics m = classifier_metrics(c);
  std::printf("%-10s %-22s %s\n", "metric", "value", "rounded");
  auto row = [](const char* name, const std::optional<double>& v) {
    if (v)
      std::printf("%-10s %-22s %s\n", name, num(*v).c_str(), fixed2(*v).c_str());
    else
      std::printf("%-10s %-22s %s\n", name, "undefined", "undefined");
  };
  row("accuracy", m.accuracy);
  row("precision", m.precision);
  row("recall", m.recall);
  row("f1", m.f1);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiducial-cube pose tracking, trajectory metrics and a toy diffusion policy"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file of option values for the subcommand");
  const int hw = std::max(1u, std::thread::hardware_concurrency());

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render a synthetic sequence with observations");
  s->add_option("--frames", synth.frames)->check(CLI::PositiveNumber);
  s->add_option("--sigma", synth.sigma, "corner noise, px")->check(CLI::NonNegativeNumber);
  s->add_option("--dropout", synth.dropout)->check(CLI::Range(0.0, 1.0));
  s->add_option("--blur", synth.blur)->check(CLI::NonNegativeNumber);
  s->add_option("--seed", synth.seed);
  s->add_option("--rate", synth.rate)->check(CLI::PositiveNumber);
  s->add_option("--out", synth.out)->required();

  BenchArgs bench;
  bench.config.threads = hw;
  auto* b = app.add_subcommand("synth-bench", "Raw PnP versus the pipeline on synthetic sequences");
  b->add_option("--frames", bench.config.frames)->check(CLI::PositiveNumber);
  b->add_option("--sigma", bench.config.sigma, "corner noise, px")->check(CLI::NonNegativeNumber);
  b->add_option("--seeds", bench.config.seeds)->check(CLI::PositiveNumber);
  b->add_option("--first-seed", bench.config.first_seed);
  b->add_option("--rate", bench.config.rate_hz)->check(CLI::PositiveNumber);
  b->add_option("--dropout", bench.config.dropout)->check(CLI::Range(0.0, 1.0));
  b->add_option("--blur", bench.config.blur_radius)->check(CLI::NonNegativeNumber);
  b->add_option("--ssim-threshold", bench.config.pipeline.ssim_threshold);
  b->add_flag("--detect", bench.config.detect, "detect markers in the images instead of using simulated corners");
  b->add_option("--threads", bench.config.threads)->check(CLI::PositiveNumber);
  b->add_option("--out", bench.out)->required();

  TrackArgs track;
  auto* t = app.add_subcommand("track", "Run the pipeline over a frame directory");
  t->add_option("--frames", track.frames)->required();
  t->add_option("--layout", track.layout)->required();
  t->add_option("--cam", track.cam)->required();
  t->add_option("--out", track.out)->required();
  t->add_option("--threads", track.threads)->check(CLI::PositiveNumber);
  t->add_flag("--detect", track.detect, "ignore supplied observations and detect markers");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval-traj", "Position and rotation MSE between two episodes");
  e->add_option("--a", eval.a)->required();
  e->add_option("--b", eval.b)->required();
  e->add_option("--rot", eval.rot)->check(CLI::IsMember({"per-axis", "geodesic"}));
  e->add_option("--out", eval.out);

  DdpmArgs dd;
  auto* d = app.add_subcommand("ddpm-demo", "Train the toy diffusion policy and sample from it");
  d->add_option("--dataset", dd.dataset)->required();
  d->add_option("--epochs", dd.train.epochs)->check(CLI::NonNegativeNumber);
  d->add_option("--seed", dd.train.seed);
  d->add_option("--batch", dd.train.batch_size)->check(CLI::PositiveNumber);
  d->add_option("--lr", dd.train.learning_rate)->check(CLI::PositiveNumber);
  d->add_option("--steps", dd.steps, "denoising iterations K")->check(CLI::PositiveNumber);
  d->add_option("--samples", dd.samples)->check(CLI::NonNegativeNumber);
  d->add_option("--obs", dd.obs, "conditioning observation, comma separated");
  d->add_option("--out", dd.out)->required();

  MetricsArgs met;
  auto* m = app.add_subcommand("metrics", "Classifier metrics from confusion counts");
  m->add_option("--tp", met.tp)->required()->check(CLI::NonNegativeNumber);
  m->add_option("--fp", met.fp)->required()->check(CLI::NonNegativeNumber);
  m->add_option("--fn", met.fn)->required()->check(CLI::NonNegativeNumber);
  m->add_option("--tn", met.tn)->required()->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth, *s);
    if (b->parsed()) return run_synth_bench(bench, *b);
    if (t->parsed()) return run_track(track, *t);
    if (e->parsed()) return run_eval_traj(eval);
    if (d->parsed()) return run_ddpm_demo(dd, *d);
    if (m->parsed()) return run_metrics(met);
  } catch (const SchemaViolation& err) {
    std::cerr << err.what() << "\n";
    return kExitUsage;
  } catch (const LengthMismatch& err) {
    std::cerr << err.what() << "\n";
    return kExitUsage;
  } catch (const TimestampGap& err) {
    std::cerr << err.what() << "\n";
    return kExitUsage;
  } catch (const NonFiniteLoss& err) {
    std::cerr << err.what() << "\n";
    return kExitQuality;
  } catch (const std::invalid_argument& err) {
    std::cerr << "invalid configuration: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitQuality;
  }
  return kExitUsage;
}
