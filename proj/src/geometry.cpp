// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nerfaug {

Pose::Pose(const Quat& q, const Vec3& t) : q_(q), t_(t) {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("Pose: quaternion has zero or non-finite norm");
  // Already-unit quaternions are kept verbatim so repeated normalization is a no-op.
  if (std::abs(n - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) q_.coeffs() /= n;
}

Pose Pose::from_wxyz(double w, double x, double y, double z, const Vec3& t) {
  return Pose(Quat(w, x, y, z), t);
}

Pose Pose::inverse() const {
  const Quat qi = q_.conjugate();
  return Pose(qi, -(qi * t_));
}

Pose Pose::operator*(const Pose& rhs) const { return Pose(q_ * rhs.q_, q_ * rhs.t_ + t_); }

double rotation_distance(const Quat& a, const Quat& b) {
  const double d = std::abs(a.normalized().dot(b.normalized()));
  return 2.0 * std::acos(std::min(1.0, d));
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("intrinsics: principal point outside the image");
}

void PoseCorrection::canonicalize() {
  const double angle = rotation.norm();
  if (angle >= std::numbers::pi) {
    const double wrapped = std::fmod(angle, 2.0 * std::numbers::pi);
    const double target = wrapped > std::numbers::pi ? wrapped - 2.0 * std::numbers::pi : wrapped;
    rotation *= target / angle;
  }
}

bool Aabb::contains(const Vec3& p, double slack) const {
  return (p.array() >= min.array() - slack).all() && (p.array() <= max.array() + slack).all();
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat3 exp_so3(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Vec3 log_so3(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

Mat3 right_jacobian_so3(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a;  // (1 - cos t) / t^2
  double b;  // (t - sin t) / t^3
  if (theta < 1e-4) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Mat3 w = skew(omega);
  return Mat3::Identity() - a * w + b * w * w;
}

Vec3 pinhole_direction(const CameraIntrinsics& k, double i, double j) {
  return Vec3((i + 0.5 - k.cx) / k.fx, (j + 0.5 - k.cy) / k.fy, 1.0);
}

std::vector<Ray> cast_rays(const Pose& pose, const CameraIntrinsics& intrinsics,
                           std::span<const PixelIndex> pixels) {
  const Mat3 r = pose.rotation_matrix();
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& px : pixels) {
    if (px.i < 0 || px.i >= intrinsics.width || px.j < 0 || px.j >= intrinsics.height) {
      throw std::invalid_argument("cast_rays: pixel (" + std::to_string(px.i) + ", " + std::to_string(px.j) +
                                  ") outside the image");
    }
    rays.push_back({pose.translation(), (r * pinhole_direction(intrinsics, px.i, px.j)).normalized()});
  }
  return rays;
}

std::vector<Ray> cast_all_rays(const Pose& pose, const CameraIntrinsics& intrinsics) {
  std::vector<PixelIndex> pixels;
  pixels.reserve(static_cast<std::size_t>(intrinsics.width) * intrinsics.height);
  for (int j = 0; j < intrinsics.height; ++j)
    for (int i = 0; i < intrinsics.width; ++i) pixels.push_back({i, j});
  return cast_rays(pose, intrinsics, pixels);
}

std::optional<Vec2> project(const Pose& pose, const CameraIntrinsics& k, const Vec3& world) {
  const Vec3 cam = pose.rotation().conjugate() * (world - pose.translation());
  if (!(cam.z() > 0.0)) return std::nullopt;
  return Vec2(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
}

Pose apply_pose_correction(const Pose& pose, const PoseCorrection& correction) {
  if (correction.rotation.isZero(0.0) && correction.translation.isZero(0.0)) return pose;
  const double angle = correction.rotation.norm();
  Quat dq = Quat::Identity();
  if (angle > 0.0) dq = Quat(Eigen::AngleAxisd(angle, correction.rotation / angle));
  return Pose(pose.rotation() * dq, pose.translation() + correction.translation);
}

std::pair<double, double> direction_angles(const Vec3& d) {
  const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  double phi = std::atan2(d.y(), d.x());
  if (phi >= std::numbers::pi) phi = -std::numbers::pi;
  return {theta, phi};
}

Vec3 direction_from_angles(double theta, double phi) {
  const double s = std::sin(theta);
  return Vec3(s * std::cos(phi), s * std::sin(phi), std::cos(theta));
}

std::vector<RaySample> sample_along_ray(const Ray& ray, double near, double far, int n_samples,
                                        std::optional<std::uint64_t> jitter_seed) {
  if (!(near > 0.0) || !(near < far)) throw std::invalid_argument("sample_along_ray: requires 0 < near < far");
  if (n_samples < 1) throw std::invalid_argument("sample_along_ray: n_samples must be at least 1");

  std::vector<double> depths(n_samples), deltas(n_samples);
  if (jitter_seed) {
    SplitMix64 rng(*jitter_seed);
    stratified_depths(near, far, depths, deltas, &rng);
  } else {
    stratified_depths<SplitMix64>(near, far, depths, deltas, nullptr);
  }

  const auto [theta, phi] = direction_angles(ray.direction);
  std::vector<RaySample> samples(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    auto& s = samples[k];
    s.position = ray.at(depths[k]);
    s.direction = ray.direction;
    s.theta = theta;
    s.phi = phi;
    s.depth = depths[k];
    s.delta = deltas[k];
  }
  return samples;
}

std::optional<std::pair<double, double>> intersect_box(const Ray& ray, const Aabb& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - o) / d;
    double tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

std::pair<double, double> default_near_far(const Pose& pose, const Aabb& box) {
  const double d = (box.center() - pose.translation()).norm();
  const double r = box.bounding_radius();
  const double near = std::max(d - 1.5 * r, 1e-3 * std::max(d, 1.0));
  return {near, d + 1.5 * r};
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  SplitMix64 g(a);
  std::uint64_t h = g.next() ^ (b + 0x632be59bd9b4e019ULL);
  SplitMix64 g2(h);
  h = g2.next() ^ (c * 0x9e3779b97f4a7c15ULL + 0x8cb92ba72f3d8dd7ULL);
  SplitMix64 g3(h);
  return g3.next();
}

}  // namespace nerfaug
