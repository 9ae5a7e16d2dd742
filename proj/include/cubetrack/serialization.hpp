#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cubetrack/cube_model.hpp"
#include "cubetrack/geometry.hpp"
#include "cubetrack/robust_track.hpp"
#include "cubetrack/synth.hpp"

namespace cubetrack {

/// Layout JSON {side_m, marker_m, margin_m, dictionary_seed, faces: [{face,
/// markers: [{id, corners: [[x, y, z] x 4]}]}]}. The markers must match the
/// cube built from the three sizes; anything else is a SchemaViolation.
struct LayoutFile {
  CubeLayout layout;
  std::uint64_t dictionary_seed = kDefaultDictionarySeed;

  Dictionary dictionary() const;
};

void write_layout(const std::filesystem::path& path, const CubeLayout& layout,
                  std::uint64_t dictionary_seed = kDefaultDictionarySeed);
LayoutFile read_layout(const std::filesystem::path& path);

/// Camera JSON {fx, fy, cx, cy, k1, k2, width, height}.
void write_camera(const std::filesystem::path& path, const CameraIntrinsics& cam);
CameraIntrinsics read_camera(const std::filesystem::path& path);

/// A frame directory as written by the synthesizer: frame_NNNNNN.pgm images
/// plus an optional observations.jsonl with one line per frame
/// {frame, t_s, true_pose: {q: [w, x, y, z], t: [x, y, z]}, obs: [{id,
/// corners: [[u, v] x 4]}]}.
struct FrameDirectory {
  std::vector<SynthFrame> frames;
  bool has_observations = false;  ///< false: images only, markers must be detected
};

inline constexpr const char* kObservationsFile = "observations.jsonl";

std::string frame_image_name(int index);

/// Writes every frame image and the observations file into `dir`.
void write_frame_directory(const std::filesystem::path& dir, const SynthSequence& sequence);
/// Throws SchemaViolation naming the file and line on malformed input, a
/// missing image, or a directory with no frames.
FrameDirectory read_frame_directory(const std::filesystem::path& dir);

/// Results JSONL line {frame, status, initial_pose, final_pose, faces: [{face,
/// ssim, accepted}]}; absent poses are null.
void write_frame_result(std::ostream& out, const FrameResult& result);

}  // namespace cubetrack
