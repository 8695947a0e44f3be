// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/render.hpp"

#include <cmath>
#include <stdexcept>

namespace nerfaug {

namespace {

// Core compositing recurrence over n samples; rgb is 3 x n column-major and
// may be null when only opacity is needed.
void composite_span(int n, const double* sigma, const double* delta, const double* rgb, double* weights,
                    double* trans_after, double* color, double& opacity) {
  double t = 1.0;
  double o = 0.0;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double e = std::exp(-sigma[k] * delta[k]);
    const double w = t * (1.0 - e);
    t *= e;
    weights[k] = w;
    trans_after[k] = t;
    o += w;
    if (rgb) {
      c0 += w * rgb[3 * k];
      c1 += w * rgb[3 * k + 1];
      c2 += w * rgb[3 * k + 2];
    }
  }
  opacity = o;
  if (color) {
    color[0] = c0;
    color[1] = c1;
    color[2] = c2;
  }
}

// Gradients of <g_color, color> + g_opacity * opacity.
void composite_span_backward(int n, const double* delta, const double* rgb, const double* weights,
                             const double* trans_after, const double* g_color, double g_opacity, double* d_sigma,
                             double* d_rgb) {
  double suffix = 0.0;
  for (int k = n - 1; k >= 0; --k) {
    const double a = g_color[0] * rgb[3 * k] + g_color[1] * rgb[3 * k + 1] + g_color[2] * rgb[3 * k + 2] + g_opacity;
    d_sigma[k] = delta[k] * (trans_after[k] * a - suffix);
    suffix += weights[k] * a;
    for (int c = 0; c < 3; ++c) d_rgb[3 * k + c] = weights[k] * g_color[c];
  }
}

}  // namespace

CompositeResult composite(std::span<const CompositeSample> samples) {
  const int n = static_cast<int>(samples.size());
  std::vector<double> sigma(n), delta(n), rgb(3 * static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    sigma[k] = samples[k].sigma;
    delta[k] = samples[k].delta;
    for (int c = 0; c < 3; ++c) rgb[3 * k + c] = samples[k].rgb[c];
  }
  CompositeResult r;
  r.weights.resize(n);
  r.transmittance.resize(n + 1);
  r.transmittance[0] = 1.0;
  composite_span(n, sigma.data(), delta.data(), rgb.data(), r.weights.data(), r.transmittance.data() + 1,
                 r.color.data(), r.opacity);
  return r;
}

CompositeGradient composite_backward(std::span<const CompositeSample> samples, const CompositeResult& result,
                                     const Vec3& d_color, double d_opacity) {
  const int n = static_cast<int>(samples.size());
  std::vector<double> delta(n), rgb(3 * static_cast<std::size_t>(n)), d_rgb(3 * static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    delta[k] = samples[k].delta;
    for (int c = 0; c < 3; ++c) rgb[3 * k + c] = samples[k].rgb[c];
  }
  CompositeGradient g;
  g.d_sigma.resize(n);
  composite_span_backward(n, delta.data(), rgb.data(), result.weights.data(), result.transmittance.data() + 1,
                          d_color.data(), d_opacity, g.d_sigma.data(), d_rgb.data());
  g.d_rgb.resize(n);
  for (int k = 0; k < n; ++k) g.d_rgb[k] = Vec3(d_rgb[3 * k], d_rgb[3 * k + 1], d_rgb[3 * k + 2]);
  return g;
}

void RenderConfig::validate() const {
  if (samples_per_ray < 1) throw std::invalid_argument("render config: samples_per_ray must be at least 1");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0))
    throw std::invalid_argument("render config: mask threshold must be in (0, 1)");
  if (chunk_rays < 1) throw std::invalid_argument("render config: chunk_rays must be positive");
}

RayQuery make_query(const Ray& ray, double near, double far, const Aabb& box, int image) {
  RayQuery q{ray, 0.0, 0.0, image};
  const auto hit = intersect_box(ray, box);
  if (!hit) return q;
  q.near = std::max(near, hit->first);
  q.far = std::min(far, hit->second);
  if (!(q.far > q.near)) q.near = q.far = 0.0;
  return q;
}

RayChunkKernel::RayChunkKernel(const FieldParameters& params, int samples_per_ray)
    : params_(params), samples_per_ray_(samples_per_ray), field_(params) {
  if (samples_per_ray < 1) throw std::invalid_argument("RayChunkKernel: samples_per_ray must be at least 1");
}

void RayChunkKernel::build(std::span<const RayQuery> rays, const CorrectionContext* corrections,
                           std::optional<std::uint64_t> jitter_seed, std::span<const std::uint64_t> ray_ids) {
  if (jitter_seed && ray_ids.size() != rays.size())
    throw std::invalid_argument("RayChunkKernel::build: jitter requires one id per ray");
  rays_.assign(rays.begin(), rays.end());
  corrections_ = corrections;
  const int n_rays = static_cast<int>(rays.size());
  offsets_.assign(n_rays + 1, 0);
  for (int r = 0; r < n_rays; ++r) offsets_[r + 1] = offsets_[r] + (rays[r].empty() ? 0 : samples_per_ray_);
  const int total = offsets_.back();

  samples_.positions.resize(3, total);
  samples_.directions.resize(3, total);
  samples_.image.resize(total);
  depth_.resize(total);
  delta_.resize(total);
  corrected_dir_.resize(n_rays);
  camera_dir_.resize(n_rays);

  for (int r = 0; r < n_rays; ++r) {
    const RayQuery& q = rays[r];
    Vec3 origin = q.ray.origin;
    Vec3 dir = q.ray.direction;
    if (corrections && q.image >= 0) {
      const Mat3& label = corrections->label_rotation.at(q.image);
      const PoseCorrection c = params_.pose_correction(q.image);
      camera_dir_[r] = label.transpose() * q.ray.direction;
      dir = label * (exp_so3(c.rotation) * camera_dir_[r]);
      origin += c.translation;
    }
    corrected_dir_[r] = dir;
    const int b = offsets_[r];
    const int n = offsets_[r + 1] - b;
    if (n == 0) continue;
    std::span<double> depths(depth_.data() + b, n);
    std::span<double> deltas(delta_.data() + b, n);
    if (jitter_seed) {
      SplitMix64 rng(mix_seed(*jitter_seed, ray_ids[r]));
      stratified_depths(q.near, q.far, depths, deltas, &rng);
    } else {
      stratified_depths<SplitMix64>(q.near, q.far, depths, deltas, nullptr);
    }
    for (int k = 0; k < n; ++k) {
      samples_.positions.col(b + k) = origin + depths[k] * dir;
      samples_.directions.col(b + k) = dir;
      samples_.image[b + k] = q.image;
    }
  }
}

void RayChunkKernel::forward_density(bool record) { field_.forward_density(samples_, record); }

void RayChunkKernel::forward_color(std::span<const double> embedding, bool override_all,
                                   std::span<const double> color_params, bool record) {
  field_.forward_color(embedding, override_all, color_params, record);
}

void RayChunkKernel::composite_opacity() {
  const int n_rays = ray_count();
  const int total = sample_count();
  weights_.resize(total);
  trans_after_.resize(total);
  ray_opacity_.resize(n_rays);
  const Eigen::VectorXd& sigma = field_.sigma();
  for (int r = 0; r < n_rays; ++r) {
    const int b = offsets_[r];
    composite_span(offsets_[r + 1] - b, sigma.data() + b, delta_.data() + b, nullptr, weights_.data() + b,
                   trans_after_.data() + b, nullptr, ray_opacity_[r]);
  }
}

void RayChunkKernel::composite_color() {
  const int n_rays = ray_count();
  const int total = sample_count();
  weights_.resize(total);
  trans_after_.resize(total);
  ray_opacity_.resize(n_rays);
  ray_color_.resize(3, n_rays);
  const Eigen::VectorXd& sigma = field_.sigma();
  const Eigen::Matrix3Xd& rgb = field_.rgb();
  for (int r = 0; r < n_rays; ++r) {
    const int b = offsets_[r];
    composite_span(offsets_[r + 1] - b, sigma.data() + b, delta_.data() + b, rgb.data() + 3 * b,
                   weights_.data() + b, trans_after_.data() + b, ray_color_.col(r).data(), ray_opacity_[r]);
  }
}

void RayChunkKernel::backward(const Eigen::Matrix3Xd& d_color, const Eigen::VectorXd& d_sigma_extra,
                              std::span<double> d_params) {
  const int n_rays = ray_count();
  const int total = sample_count();
  if (d_color.cols() != n_rays || (d_sigma_extra.size() != 0 && d_sigma_extra.size() != total))
    throw std::logic_error("RayChunkKernel::backward: gradient shapes do not match the chunk");
  Eigen::VectorXd d_sigma(total);
  Eigen::Matrix3Xd d_rgb(3, total);
  const Eigen::Matrix3Xd& rgb = field_.rgb();
  for (int r = 0; r < n_rays; ++r) {
    const int b = offsets_[r];
    composite_span_backward(offsets_[r + 1] - b, delta_.data() + b, rgb.data() + 3 * b, weights_.data() + b,
                            trans_after_.data() + b, d_color.col(r).data(), 0.0, d_sigma.data() + b,
                            d_rgb.data() + 3 * b);
  }
  if (d_sigma_extra.size() != 0) d_sigma += d_sigma_extra;

  const bool want_pose = corrections_ != nullptr;
  Eigen::Matrix3Xd d_pos, d_dir;
  field_.backward(d_sigma, d_rgb, d_params, want_pose ? &d_pos : nullptr, want_pose ? &d_dir : nullptr);
  if (!want_pose) return;

  double* d_pose = d_params.data() + params_.layout().begin(ParamGroup::kPoseCorrection);
  for (int r = 0; r < n_rays; ++r) {
    const int image = rays_[r].image;
    const int b = offsets_[r];
    const int e = offsets_[r + 1];
    if (image < 0 || e == b) continue;
    Vec3 g_origin = Vec3::Zero();
    Vec3 g_dir = Vec3::Zero();
    for (int s = b; s < e; ++s) {
      g_origin += d_pos.col(s);
      g_dir += depth_[s] * d_pos.col(s) + d_dir.col(s);
    }
    const PoseCorrection c = params_.pose_correction(image);
    const Mat3 rc = corrections_->label_rotation[image] * exp_so3(c.rotation);
    const Vec3 g_omega = right_jacobian_so3(c.rotation).transpose() * camera_dir_[r].cross(rc.transpose() * g_dir);
    double* slot = d_pose + 6 * static_cast<std::size_t>(image);
    for (int k = 0; k < 3; ++k) {
      slot[k] += g_omega[k];
      slot[3 + k] += g_origin[k];
    }
  }
}

namespace {

std::vector<RayQuery> image_queries(const FieldParameters& params, const Pose& pose,
                                    const CameraIntrinsics& intrinsics, const RenderConfig& config) {
  intrinsics.validate();
  config.validate();
  const Aabb& box = params.config().bounds;
  auto [near, far] = default_near_far(pose, box);
  if (config.near > 0.0) near = config.near;
  if (config.far > 0.0) far = config.far;
  if (!(far > near)) throw std::invalid_argument("render: far must exceed near");
  const auto rays = cast_all_rays(pose, intrinsics);
  std::vector<RayQuery> queries;
  queries.reserve(rays.size());
  for (const auto& ray : rays) queries.push_back(make_query(ray, near, far, box, -1));
  return queries;
}

std::vector<std::uint64_t> pixel_ids(std::size_t begin, std::size_t end) {
  std::vector<std::uint64_t> ids(end - begin);
  for (std::size_t k = begin; k < end; ++k) ids[k - begin] = k;
  return ids;
}

}  // namespace

AppearanceRenders render_appearances(const FieldParameters& params, const Pose& pose,
                                     const CameraIntrinsics& intrinsics, std::span<const Coloring> colorings,
                                     const RenderConfig& config) {
  const int d = params.config().embedding_dim;
  for (const auto& c : colorings) {
    if (static_cast<int>(c.embedding.size()) != d) throw std::invalid_argument("render: embedding dimension mismatch");
    if (!c.color_params.empty() && c.color_params.size() != params.layout().size(ParamGroup::kColorMlp))
      throw std::invalid_argument("render: color network size mismatch");
  }
  const auto queries = image_queries(params, pose, intrinsics, config);
  const std::size_t n_pixels = queries.size();
  const int chunk = config.chunk_rays;
  const int n_chunks = static_cast<int>((n_pixels + chunk - 1) / chunk);

  AppearanceRenders out;
  out.colors.assign(colorings.size(), Image(intrinsics.width, intrinsics.height, 3));
  out.opacity = Image(intrinsics.width, intrinsics.height, 1);
  const std::optional<std::uint64_t> jitter =
      config.jitter ? std::optional<std::uint64_t>(config.jitter_seed) : std::nullopt;

#pragma omp parallel for schedule(dynamic)
  for (int ci = 0; ci < n_chunks; ++ci) {
    const std::size_t begin = static_cast<std::size_t>(ci) * chunk;
    const std::size_t end = std::min(n_pixels, begin + chunk);
    RayChunkKernel kernel(params, config.samples_per_ray);
    const auto ids = pixel_ids(begin, end);
    kernel.build(std::span(queries).subspan(begin, end - begin), nullptr, jitter, ids);
    kernel.forward_density(false);
    for (std::size_t k = 0; k < colorings.size(); ++k) {
      kernel.forward_color(colorings[k].embedding, true, colorings[k].color_params, false);
      kernel.composite_color();
      Image& img = out.colors[k];
      for (std::size_t p = begin; p < end; ++p) {
        const int r = static_cast<int>(p - begin);
        const double o = kernel.ray_opacity()[r];
        for (int c = 0; c < 3; ++c) img.data[3 * p + c] = kernel.ray_color()(c, r) + (1.0 - o) * config.background[c];
        if (k == 0) out.opacity.data[p] = o;
      }
    }
    if (colorings.empty()) {
      kernel.composite_opacity();
      for (std::size_t p = begin; p < end; ++p) out.opacity.data[p] = kernel.ray_opacity()[p - begin];
    }
  }
  return out;
}

RenderOutput render_image(const FieldParameters& params, const Pose& pose, const CameraIntrinsics& intrinsics,
                          std::span<const double> embedding, const RenderConfig& config) {
  const Coloring coloring{std::vector<double>(embedding.begin(), embedding.end()), {}};
  auto renders = render_appearances(params, pose, intrinsics, std::span(&coloring, 1), config);
  return {std::move(renders.colors.front()), std::move(renders.opacity)};
}

Image render_opacity(const FieldParameters& params, const Pose& pose, const CameraIntrinsics& intrinsics,
                     const RenderConfig& config) {
  return render_appearances(params, pose, intrinsics, {}, config).opacity;
}

Image threshold_mask(const Image& opacity, double tau) {
  Image mask(opacity.width, opacity.height, 1);
  for (std::size_t p = 0; p < opacity.pixel_count(); ++p) mask.data[p] = opacity.data[p] >= tau ? 1.0 : 0.0;
  return mask;
}

Image render_mask(const FieldParameters& params, const Pose& pose, const CameraIntrinsics& intrinsics,
                  const RenderConfig& config) {
  return threshold_mask(render_opacity(params, pose, intrinsics, config), config.mask_threshold);
}

RenderOutput render_image_reference(const FieldParameters& params, const Pose& pose,
                                    const CameraIntrinsics& intrinsics, std::span<const double> embedding,
                                    const RenderConfig& config) {
  const auto queries = image_queries(params, pose, intrinsics, config);
  RenderOutput out{Image(intrinsics.width, intrinsics.height, 3), Image(intrinsics.width, intrinsics.height, 1)};
  for (std::size_t p = 0; p < queries.size(); ++p) {
    const RayQuery& q = queries[p];
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    if (!q.empty()) {
      const std::optional<std::uint64_t> seed =
          config.jitter ? std::optional<std::uint64_t>(mix_seed(config.jitter_seed, p)) : std::nullopt;
      const auto samples = sample_along_ray(q.ray, q.near, q.far, config.samples_per_ray, seed);
      std::vector<CompositeSample> cs;
      cs.reserve(samples.size());
      for (const auto& s : samples) {
        const FieldOutput f = field_forward(params, s, embedding);
        cs.push_back({f.sigma, f.rgb, s.delta});
      }
      const auto result = composite(cs);
      color = result.color;
      opacity = result.opacity;
    }
    for (int c = 0; c < 3; ++c) out.color.data[3 * p + c] = color[c] + (1.0 - opacity) * config.background[c];
    out.opacity.data[p] = opacity;
  }
  return out;
}

double mask_iou(const Image& a, const Image& b) {
  if (!a.same_size(b) || a.channels != 1 || b.channels != 1) throw std::invalid_argument("mask_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    const bool x = a.data[p] > 0.5;
    const bool y = b.data[p] > 0.5;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace nerfaug
