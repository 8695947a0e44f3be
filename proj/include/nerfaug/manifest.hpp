// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/toy_scene.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nerfaug {

/// Scene manifests are JSON Lines: a header record with the format tag,
/// version, intrinsics, bounding box and units, then one record per frame.
inline constexpr int kManifestVersion = 1;

struct ManifestFrame {
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
  Pose pose;                     // pose label
  std::string split = "train";  // "train" or "heldout"
  std::optional<Pose> true_pose;  // known only for generated scenes

  bool operator==(const ManifestFrame& rhs) const;
};

struct SceneManifest {
  CameraIntrinsics intrinsics;
  Aabb bounds;
  std::string units = "scene units";
  std::vector<ManifestFrame> frames;
  /// Directory relative paths are resolved against; not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// Compares serialized fields only.
  bool operator==(const SceneManifest& rhs) const;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningSink = std::function<void(const std::string&)>;

struct ManifestLoadOptions {
  bool check_files = true;  // require every referenced file to exist
  WarningSink warn;         // empty: warnings go to stderr
};

/// Throws ManifestError naming the file and line for missing files,
/// malformed records and invalid poses. Quaternions are renormalized; a
/// correction above 1e-3 is reported through the warning sink.
SceneManifest load_manifest(const std::filesystem::path& path, const ManifestLoadOptions& options = {});
void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path);

/// Writes the images, masks and manifest of a generated scene under `dir`.
SceneManifest write_toy_scene(const ToyScene& scene, const std::filesystem::path& dir);

/// Loaded frames of one split, with masks (all-ones when absent).
struct LoadedFrames {
  std::vector<Image> images;
  std::vector<Image> masks;
  std::vector<Pose> poses;
  std::vector<std::size_t> frame_index;  // position in the manifest
};
LoadedFrames load_frames(const SceneManifest& manifest, const std::string& split);

}  // namespace nerfaug
