// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/toy_scene.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nerfaug {

ToyPrimitive ToyPrimitive::sphere(const Vec3& center, double radius, const Vec3& albedo) {
  return {Kind::kSphere, center, Vec3::Constant(radius), albedo};
}

ToyPrimitive ToyPrimitive::box(const Vec3& center, const Vec3& half_extent, const Vec3& albedo) {
  return {Kind::kBox, center, half_extent, albedo};
}

std::optional<std::pair<double, Vec3>> ToyPrimitive::intersect(const Ray& ray) const {
  if (kind == Kind::kSphere) {
    const double r = size.x();
    const Vec3 oc = ray.origin - center;
    const double a = ray.direction.squaredNorm();
    const double b = oc.dot(ray.direction);
    const double c = oc.squaredNorm() - r * r;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / a;
    if (t <= 0.0) t = (-b + sq) / a;
    if (t <= 0.0) return std::nullopt;
    return std::make_pair(t, ((ray.at(t) - center) / r).eval());
  }
  const auto hit = intersect_box(ray, bounds());
  if (!hit) return std::nullopt;
  const double t = hit->first > 0.0 ? hit->first : hit->second;
  if (t <= 0.0) return std::nullopt;
  const Vec3 local = (ray.at(t) - center).cwiseQuotient(size);
  int axis = 0;
  local.cwiseAbs().maxCoeff(&axis);
  Vec3 n = Vec3::Zero();
  n[axis] = local[axis] > 0.0 ? 1.0 : -1.0;
  return std::make_pair(t, n);
}

Aabb ToyPrimitive::bounds() const {
  const Vec3 half = kind == Kind::kSphere ? Vec3::Constant(size.x()) : size;
  return {center - half, center + half};
}

ToySceneSpec ToySceneSpec::sphere_and_box() {
  ToySceneSpec s;
  s.primitives = {ToyPrimitive::sphere(Vec3(-0.35, -0.1, 0.0), 0.5, Vec3(0.9, 0.55, 0.3)),
                  ToyPrimitive::box(Vec3(0.5, 0.2, -0.1), Vec3(0.3, 0.3, 0.4), Vec3(0.35, 0.6, 0.9))};
  s.bounds = {Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  return s;
}

CameraIntrinsics ToySceneSpec::intrinsics() const {
  const double f = focal_scale * width;
  return {f, f, 0.5 * width, 0.5 * height, width, height};
}

void ToySceneSpec::validate() const {
  intrinsics().validate();
  for (const auto& p : primitives) {
    if (!(p.size.minCoeff() > 0.0)) throw std::invalid_argument("toy scene: primitive sizes must be positive");
    const Aabb b = p.bounds();
    if (!bounds.contains(b.min) || !bounds.contains(b.max))
      throw std::invalid_argument("toy scene: primitive does not fit inside the bounding box");
  }
  if (!(light_direction.norm() > 0.0)) throw std::invalid_argument("toy scene: light direction must be non-zero");
  if (light_jitter_deg < 0.0 || pose_noise_deg < 0.0 || pose_noise_translation < 0.0)
    throw std::invalid_argument("toy scene: jitter and noise levels must be non-negative");
  if (!(orbit_radius > bounds.bounding_radius()))
    throw std::invalid_argument("toy scene: cameras must orbit outside the bounding sphere");
  if (!(min_elevation_deg <= max_elevation_deg) || std::abs(min_elevation_deg) >= 90.0 ||
      std::abs(max_elevation_deg) >= 90.0)
    throw std::invalid_argument("toy scene: elevation range must lie inside (-90, 90)");
  if (train_views < 0 || heldout_views < 0) throw std::invalid_argument("toy scene: view counts must be >= 0");
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(Quat(r), eye);
}

std::pair<Vec3, bool> trace_toy_ray(const ToySceneSpec& spec, const Ray& ray, const Vec3& light) {
  double best = std::numeric_limits<double>::infinity();
  const ToyPrimitive* hit = nullptr;
  Vec3 normal = Vec3::Zero();
  for (const auto& p : spec.primitives) {
    if (const auto h = p.intersect(ray); h && h->first < best) {
      best = h->first;
      normal = h->second;
      hit = &p;
    }
  }
  if (!hit) return {Vec3::Zero(), false};
  const double lambert = std::max(0.0, -normal.dot(light.normalized()));
  const double shade = spec.ambient + (1.0 - spec.ambient) * lambert;
  return {hit->albedo * shade, true};
}

ToyView render_toy_view(const ToySceneSpec& spec, const Pose& pose, const Vec3& light) {
  const CameraIntrinsics k = spec.intrinsics();
  ToyView view;
  view.true_pose = pose;
  view.label_pose = pose;
  view.light = light.normalized();
  view.image = Image(k.width, k.height, spec.grayscale ? 1 : 3);
  view.mask = Image(k.width, k.height, 1);
  const auto rays = cast_all_rays(pose, k);
  for (std::size_t p = 0; p < rays.size(); ++p) {
    const auto [rgb, hit] = trace_toy_ray(spec, rays[p], view.light);
    view.mask.data[p] = hit ? 1.0 : 0.0;
    if (spec.grayscale) {
      view.image.data[p] = rgb.mean();
    } else {
      for (int c = 0; c < 3; ++c) view.image.data[3 * p + c] = rgb[c];
    }
  }
  return view;
}

namespace {

Vec3 random_unit(SplitMix64& rng) {
  const double z = 2.0 * rng.uniform() - 1.0;
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

// Uniform direction inside the cone of half-angle `max_angle` around `axis`.
Vec3 jitter_direction(const Vec3& axis, double max_angle, SplitMix64& rng) {
  const Vec3 a = axis.normalized();
  const double cos_t = 1.0 - rng.uniform() * (1.0 - std::cos(max_angle));
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  Vec3 u = a.cross(std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).normalized();
  const Vec3 v = a.cross(u);
  return cos_t * a + sin_t * (std::cos(phi) * u + std::sin(phi) * v);
}

}  // namespace

ToyScene generate_toy_scene(const ToySceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  ToyScene scene;
  scene.spec = spec;
  scene.intrinsics = spec.intrinsics();
  const double deg = std::numbers::pi / 180.0;
  const double s_lo = std::sin(spec.min_elevation_deg * deg);
  const double s_hi = std::sin(spec.max_elevation_deg * deg);
  const Vec3 target = spec.bounds.center();

  const int total = spec.train_views + spec.heldout_views;
  for (int v = 0; v < total; ++v) {
    const bool heldout = v >= spec.train_views;
    // Separate streams keep the cameras fixed when the light or noise settings change.
    SplitMix64 rng(mix_seed(seed, v, 0x63616dULL));
    SplitMix64 light_rng(mix_seed(seed, v, 0x6c6974ULL));
    SplitMix64 noise_rng(mix_seed(seed, v, 0x6e6f6973ULL));
    const double azimuth = 2.0 * std::numbers::pi * rng.uniform();
    const double elevation = std::asin(s_lo + (s_hi - s_lo) * rng.uniform());
    const Vec3 eye = target + spec.orbit_radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                                       std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    const Pose pose = look_at(eye, target);
    const Vec3 light = heldout || spec.light_jitter_deg == 0.0
                           ? spec.light_direction.normalized()
                           : jitter_direction(spec.light_direction, spec.light_jitter_deg * deg, light_rng);
    ToyView view = render_toy_view(spec, pose, light);
    view.heldout = heldout;
    if (!heldout && (spec.pose_noise_deg > 0.0 || spec.pose_noise_translation > 0.0)) {
      const Vec3 omega = random_unit(noise_rng) * (spec.pose_noise_deg * deg);
      const Vec3 dt = random_unit(noise_rng) * spec.pose_noise_translation;
      const Mat3 r = pose.rotation_matrix() * exp_so3(omega);
      view.label_pose = Pose(Quat(r), pose.translation() + dt);
    }
    scene.views.push_back(std::move(view));
  }
  return scene;
}

}  // namespace nerfaug
