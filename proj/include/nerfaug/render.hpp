// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nerfaug {

struct CompositeSample {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
  double delta = 0.0;
};

/// Alpha-compositing result for one ray. `transmittance` has one more entry
/// than `weights`: transmittance[n] is the light reaching sample n and the
/// last entry is the residual after the final sample.
struct CompositeResult {
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  std::vector<double> weights;
  std::vector<double> transmittance;
};

/// Front-to-back compositing: alpha_n = 1 - exp(-sigma_n delta_n),
/// w_n = T_n alpha_n, color = sum w_n rgb_n, opacity = sum w_n.
CompositeResult composite(std::span<const CompositeSample> samples);

struct CompositeGradient {
  std::vector<double> d_sigma;
  std::vector<Vec3> d_rgb;
};

/// Gradients of <d_color, color> + d_opacity * opacity with respect to the
/// per-sample densities and colors.
CompositeGradient composite_backward(std::span<const CompositeSample> samples, const CompositeResult& result,
                                     const Vec3& d_color, double d_opacity);

struct RenderConfig {
  int samples_per_ray = 64;
  double mask_threshold = 0.5;  // tau
  /// Preview background added as (1 - opacity) * background; zero keeps the
  /// premultiplied foreground.
  Vec3 background = Vec3::Zero();
  bool jitter = false;
  std::uint64_t jitter_seed = 0;
  /// Scene depth bounds; non-positive values derive them from the pose and
  /// the field's bounding box.
  double near = 0.0;
  double far = 0.0;
  int chunk_rays = 256;

  void validate() const;
};

/// One ray to march, with its sampling interval already clipped to the scene
/// box. `image` selects the embedding row and pose correction; -1 means the
/// embedding comes from an override and no correction is applied.
struct RayQuery {
  Ray ray;
  double near = 0.0;
  double far = 0.0;
  int image = -1;
  bool empty() const { return !(far > near); }
};

/// Clips [near, far] to the ray's intersection with the box.
RayQuery make_query(const Ray& ray, double near, double far, const Aabb& box, int image);

/// Per-image data needed to apply learnable pose corrections to label rays.
struct CorrectionContext {
  std::vector<Mat3> label_rotation;  // world-from-camera rotation of each image's label
};

/// Marches a chunk of rays through one field: builds stratified samples,
/// evaluates density and color, composites, and back-propagates pixel and
/// density gradients to every parameter group including pose corrections.
class RayChunkKernel {
 public:
  RayChunkKernel(const FieldParameters& params, int samples_per_ray);

  /// `corrections` non-null applies each image's pose correction to its
  /// label ray. `jitter_seed` enables stratified jitter; each ray's stream is
  /// mix_seed(*jitter_seed, ray_ids[r]).
  void build(std::span<const RayQuery> rays, const CorrectionContext* corrections,
             std::optional<std::uint64_t> jitter_seed, std::span<const std::uint64_t> ray_ids);

  void forward_density(bool record);
  void forward_color(std::span<const double> embedding, bool override_all, std::span<const double> color_params,
                     bool record);
  /// Compositing weights from the current densities (color optional).
  void composite_opacity();
  void composite_color();

  int ray_count() const { return static_cast<int>(offsets_.size()) - 1; }
  int sample_count() const { return samples_.size(); }
  int ray_begin(int r) const { return offsets_[r]; }
  int ray_end(int r) const { return offsets_[r + 1]; }
  const Eigen::VectorXd& sigma() const { return field_.sigma(); }
  const Eigen::VectorXd& weights() const { return weights_; }
  const SampleBatch& samples() const { return samples_; }
  const Eigen::Matrix3Xd& ray_color() const { return ray_color_; }
  const Eigen::VectorXd& ray_opacity() const { return ray_opacity_; }
  const FieldEvaluator& field() const { return field_; }

  /// Reverse pass. `d_color` is (3 x rays), `d_sigma_extra` adds direct
  /// per-sample density gradients (e.g. a density penalty). Pose-correction
  /// gradients are produced only when the chunk was built with corrections.
  void backward(const Eigen::Matrix3Xd& d_color, const Eigen::VectorXd& d_sigma_extra, std::span<double> d_params);

 private:
  const FieldParameters& params_;
  int samples_per_ray_;
  FieldEvaluator field_;

  std::vector<RayQuery> rays_;
  std::vector<int> offsets_;
  const CorrectionContext* corrections_ = nullptr;
  std::vector<Vec3> corrected_dir_;
  std::vector<Vec3> camera_dir_;
  Eigen::VectorXd depth_;
  Eigen::VectorXd delta_;
  SampleBatch samples_;

  Eigen::VectorXd weights_;
  Eigen::VectorXd trans_after_;
  Eigen::Matrix3Xd ray_color_;
  Eigen::VectorXd ray_opacity_;
};

/// Color to apply for one rendering of a shared density pass.
struct Coloring {
  std::vector<double> embedding;
  std::vector<double> color_params;  // empty: the field's own color network
};

struct RenderOutput {
  Image color;    // 3 channels, premultiplied by opacity unless a background is set
  Image opacity;  // 1 channel
};

struct AppearanceRenders {
  std::vector<Image> colors;
  Image opacity;
};

/// Renders one pose under several colorings, evaluating the density branch
/// once per ray chunk. Parallel over chunks.
AppearanceRenders render_appearances(const FieldParameters& params, const Pose& pose,
                                     const CameraIntrinsics& intrinsics, std::span<const Coloring> colorings,
                                     const RenderConfig& config);

RenderOutput render_image(const FieldParameters& params, const Pose& pose, const CameraIntrinsics& intrinsics,
                          std::span<const double> embedding, const RenderConfig& config);

/// Accumulated opacity only; never touches the color branch.
Image render_opacity(const FieldParameters& params, const Pose& pose, const CameraIntrinsics& intrinsics,
                     const RenderConfig& config);

/// 1 where opacity >= tau, else 0.
Image threshold_mask(const Image& opacity, double tau);

Image render_mask(const FieldParameters& params, const Pose& pose, const CameraIntrinsics& intrinsics,
                  const RenderConfig& config);

/// Per-pixel serial reference built from sample_along_ray, field_forward and
/// composite. Slow; kept for cross-checking the batched kernels.
RenderOutput render_image_reference(const FieldParameters& params, const Pose& pose,
                                    const CameraIntrinsics& intrinsics, std::span<const double> embedding,
                                    const RenderConfig& config);

/// Intersection over union of two binary masks (values > 0.5 are set).
double mask_iou(const Image& a, const Image& b);

}  // namespace nerfaug
