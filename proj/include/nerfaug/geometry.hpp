// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace nerfaug {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Rigid world-from-camera transform. The rotation is kept unit-norm after
/// every construction and composition.
class Pose {
 public:
  Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Pose(const Quat& q, const Vec3& t);

  /// Scalar-first quaternion constructor, matching the file formats.
  static Pose from_wxyz(double w, double x, double y, double z, const Vec3& t);

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;

  Vec3 transform(const Vec3& p) const { return q_ * p + t_; }
  Vec3 camera_center() const { return t_; }

 private:
  Quat q_;
  Vec3 t_;
};

/// Geodesic angle between two rotations, in radians.
double rotation_distance(const Quat& a, const Quat& b);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws std::invalid_argument when the invariants are violated.
  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double depth) const { return origin + depth * direction; }
};

/// Column i, row j.
struct PixelIndex {
  int i = 0;
  int j = 0;
};

struct RaySample {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double theta = 0.0;  // polar angle from +z, [0, pi]
  double phi = 0.0;    // azimuth, [-pi, pi)
  double depth = 0.0;
  double delta = 0.0;
};

/// Axis-angle rotation delta plus additive translation delta.
struct PoseCorrection {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  /// Wraps the rotation delta back into the open ball of radius pi.
  void canonicalize();
};

struct Aabb {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double bounding_radius() const { return 0.5 * extent().norm(); }
  bool contains(const Vec3& p, double slack = 0.0) const;
  bool operator==(const Aabb&) const = default;
};

// so(3) helpers.
Mat3 skew(const Vec3& v);
Mat3 exp_so3(const Vec3& omega);
Vec3 log_so3(const Mat3& r);
/// Right Jacobian: Exp(w + dw) ~= Exp(w) Exp(J_r(w) dw).
Mat3 right_jacobian_so3(const Vec3& omega);

/// Unnormalized camera-frame direction through the pixel center
/// ((i + 0.5 - cx) / fx, (j + 0.5 - cy) / fy, 1).
Vec3 pinhole_direction(const CameraIntrinsics& intrinsics, double i, double j);

/// One ray per pixel. Throws std::invalid_argument for out-of-range pixels.
std::vector<Ray> cast_rays(const Pose& pose, const CameraIntrinsics& intrinsics,
                           std::span<const PixelIndex> pixels);

/// Every pixel of the image in row-major order.
std::vector<Ray> cast_all_rays(const Pose& pose, const CameraIntrinsics& intrinsics);

/// Continuous pixel coordinates (i, j) of a world point; pixel centers sit at
/// integer + 0.5. Returns nullopt for points behind the camera.
std::optional<Vec2> project(const Pose& pose, const CameraIntrinsics& intrinsics, const Vec3& world);

Pose apply_pose_correction(const Pose& pose, const PoseCorrection& correction);

/// Stratified samples over [near, far]. Without a jitter seed every sample sits
/// at its bin midpoint.
std::vector<RaySample> sample_along_ray(const Ray& ray, double near, double far, int n_samples,
                                        std::optional<std::uint64_t> jitter_seed);

/// Writes the stratified depths and interval lengths for one ray. `jitter`
/// must be null or a generator of uniforms in [0, 1).
template <typename UniformFn>
void stratified_depths(double near, double far, std::span<double> depths, std::span<double> deltas,
                       UniformFn* jitter) {
  const auto n = depths.size();
  const double width = (far - near) / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = jitter ? (*jitter)() : 0.5;
    depths[k] = near + (static_cast<double>(k) + u) * width;
  }
  for (std::size_t k = 0; k + 1 < n; ++k) deltas[k] = depths[k + 1] - depths[k];
  deltas[n - 1] = width;
}

/// Slab intersection; returns the entry/exit depths (entry clamped at 0).
std::optional<std::pair<double, double>> intersect_box(const Ray& ray, const Aabb& box);

/// Spherical angles of a unit direction.
std::pair<double, double> direction_angles(const Vec3& d);
Vec3 direction_from_angles(double theta, double phi);

/// Scene near/far bounds for a camera: distance to the box center minus/plus
/// 1.5 bounding radii, with near kept positive.
std::pair<double, double> default_near_far(const Pose& pose, const Aabb& box);

/// splitmix64 stream; used where a generator is seeded per ray or per pixel.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double operator()() { return uniform(); }

 private:
  std::uint64_t state_;
};

/// Mixes several integers into one well-distributed seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace nerfaug
