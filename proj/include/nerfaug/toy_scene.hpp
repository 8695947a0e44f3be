// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace nerfaug {

struct ToyPrimitive {
  enum class Kind { kSphere, kBox };
  Kind kind = Kind::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.5);  // sphere: size.x() is the radius; box: half extents
  Vec3 albedo = Vec3::Constant(0.8);

  static ToyPrimitive sphere(const Vec3& center, double radius, const Vec3& albedo);
  static ToyPrimitive box(const Vec3& center, const Vec3& half_extent, const Vec3& albedo);
  /// Nearest positive hit depth and the outward normal there.
  std::optional<std::pair<double, Vec3>> intersect(const Ray& ray) const;
  Aabb bounds() const;
};

struct ToySceneSpec {
  std::vector<ToyPrimitive> primitives;
  Aabb bounds;

  Vec3 light_direction = Vec3(-0.4, -0.5, -0.75);  // direction the light travels
  double light_jitter_deg = 0.0;  // per-image cone half-angle around light_direction
  double ambient = 0.25;

  double orbit_radius = 3.5;
  double min_elevation_deg = -60.0;
  double max_elevation_deg = 60.0;
  int width = 64;
  int height = 64;
  double focal_scale = 1.2;  // fx = fy = focal_scale * width

  int train_views = 100;
  int heldout_views = 20;
  /// Exported train labels are perturbed by exactly this rotation angle and
  /// translation length in random directions.
  double pose_noise_deg = 0.0;
  double pose_noise_translation = 0.0;
  bool grayscale = true;

  /// Sphere and box used by the acceptance checks.
  static ToySceneSpec sphere_and_box();
  CameraIntrinsics intrinsics() const;
  void validate() const;
};

struct ToyView {
  Image image;
  Image mask;  // 1 channel, exactly 0 or 1
  Pose true_pose;
  Pose label_pose;
  Vec3 light = Vec3::UnitZ();
  bool heldout = false;
};

struct ToyScene {
  ToySceneSpec spec;
  CameraIntrinsics intrinsics;
  std::vector<ToyView> views;
};

/// Camera at `eye` looking at `target`, world +z up (camera y points down).
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Shaded radiance of one ray (zero on a miss) and whether it hit anything.
std::pair<Vec3, bool> trace_toy_ray(const ToySceneSpec& spec, const Ray& ray, const Vec3& light);

/// Renders one view of the scene with exact pixel-center silhouettes.
ToyView render_toy_view(const ToySceneSpec& spec, const Pose& pose, const Vec3& light);

/// Train views come first, then held-out views; held-out views use the
/// unjittered light.
ToyScene generate_toy_scene(const ToySceneSpec& spec, std::uint64_t seed);

}  // namespace nerfaug
