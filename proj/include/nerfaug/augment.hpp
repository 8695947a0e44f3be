// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/render.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nerfaug {

using Rng = std::mt19937_64;

enum class EmbeddingStrategy { kUniform = 0, kInterpolate, kExtrapolate, kGaussian };
inline constexpr int kEmbeddingStrategyCount = 4;
std::string to_string(EmbeddingStrategy strategy);
EmbeddingStrategy parse_embedding_strategy(const std::string& text);

/// Gaussian model of the learned appearance embeddings.
struct EmbeddingDistribution {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // biased (1/N) estimate
  Eigen::MatrixXd factor;      // factor * factor^T == covariance with negative eigenvalues clamped to 0
  std::vector<Eigen::VectorXd> embeddings;

  static EmbeddingDistribution fit(std::vector<Eigen::VectorXd> embeddings);
  static EmbeddingDistribution from_params(const FieldParameters& params);
  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd sample(Rng& rng) const;
};

struct ExtrapolationRange {
  double below = 0.5;  // alpha ~ U(-below, 0)
  double above = 0.5;  // alpha ~ U(1, 1 + above)
};

struct EmbeddingDraw {
  EmbeddingStrategy strategy = EmbeddingStrategy::kUniform;
  Eigen::VectorXd embedding;
  int i = -1;
  int j = -1;
  std::optional<double> alpha;
};

/// e = e_i + alpha (e_j - e_i).
Eigen::VectorXd interpolate_embeddings(const Eigen::VectorXd& ei, const Eigen::VectorXd& ej, double alpha);

/// Draws one embedding. Pairwise strategies pick two distinct indices and
/// throw std::invalid_argument with fewer than two embeddings; `forced_alpha`
/// overrides the random coefficient.
EmbeddingDraw sample_embedding(const EmbeddingDistribution& dist, EmbeddingStrategy strategy, Rng& rng,
                               std::optional<double> forced_alpha = std::nullopt,
                               const ExtrapolationRange& range = {});

/// Picks a strategy with probability proportional to its weight.
EmbeddingStrategy choose_strategy(const std::array<double, kEmbeddingStrategyCount>& weights, Rng& rng);

/// Copy of the color network with N(0, (s * sigma_l)^2) noise added to every
/// weight and bias of layer l, where sigma_l is the standard deviation of
/// that layer's weights.
std::vector<double> perturb_color_network(const FieldParameters& params, double scale, Rng& rng);

/// fg + (1 - opacity) * bg per pixel. `background` is converted to the
/// foreground's channel count.
Image composite_background(const Image& foreground, const Image& opacity, const Image& background);

struct PoseSamplerConfig {
  /// Camera-to-scene-center distance range; non-positive values use 0.8x and
  /// 1.25x the mean distance of the training labels.
  double min_distance = 0.0;
  double max_distance = 0.0;
  /// Fraction of the image kept clear at each border when placing the
  /// scene center.
  double border = 0.25;
};

/// Uniform random orientation and a scene-center position uniform in the
/// volume of the frustum shell between the two distances.
Pose sample_pose(const CameraIntrinsics& intrinsics, const Vec3& center, double min_distance, double max_distance,
                 double border, Rng& rng);

struct AugmentConfig {
  int n_labels = 750;
  int illumination_configs = 24;
  int color_configs = 40;
  std::array<double, kEmbeddingStrategyCount> strategy_weights = {0.25, 0.25, 0.25, 0.25};
  ExtrapolationRange extrapolation;
  std::vector<double> color_noise_scales = {0.05, 0.10};  // cycled over color configurations
  double mask_threshold = 0.5;
  std::vector<std::filesystem::path> backgrounds;
  double background_probability = 0.5;
  int width = 768;
  int height = 512;
  int samples_per_ray = 64;
  int chunk_rays = 256;
  bool grayscale = true;
  PoseSamplerConfig pose_sampler;
  std::uint64_t seed = 0;

  int configs_per_pose() const { return illumination_configs + color_configs; }
  void validate() const;
};

struct GeneratedSample {
  int pose_index = 0;
  int config_index = 0;
  std::filesystem::path image;  // relative to the output directory
  std::filesystem::path mask;
  Pose pose;
  std::string kind;  // "illumination" or "color"
  EmbeddingDraw draw;
  std::optional<double> noise_scale;
  std::optional<std::uint64_t> noise_seed;
  bool background = false;
  int background_index = -1;  // position in AugmentConfig::backgrounds
  std::string background_source;
  std::uint64_t seed = 0;
  std::string error;  // non-empty when the sample could not be written
};

struct AugmentResult {
  std::vector<GeneratedSample> samples;
  std::vector<std::filesystem::path> masks;
  std::filesystem::path manifest;
  int error_count = 0;
};

/// Intrinsics rescaled to another resolution.
CameraIntrinsics rescale_intrinsics(const CameraIntrinsics& intrinsics, int width, int height);

/// Renders the augmented set under `out_dir`: one mask per pose from the
/// geometry model and N_cfg images from the appearance model sharing one
/// density pass. `labels` empty draws `n_labels` poses from the sampler.
/// Writes manifest.jsonl ordered by pose then configuration. Without a
/// background pool every image keeps a black background.
AugmentResult generate_augmented_set(const FieldParameters& appearance, const FieldParameters& geometry,
                                     const CameraIntrinsics& intrinsics, std::span<const Pose> training_labels,
                                     std::span<const Pose> labels, const AugmentConfig& config,
                                     const std::filesystem::path& out_dir);

/// Reads pose labels (records with "q" and "t") from a JSON Lines file;
/// header records carrying a "format" field are skipped.
std::vector<Pose> load_pose_labels(const std::filesystem::path& path);

}  // namespace nerfaug
