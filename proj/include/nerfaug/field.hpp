// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/encoding.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/mlp.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nerfaug {

/// Architecture of one radiance field.
struct FieldConfig {
  int grid_resolution = 128;
  int grid_channels = 16;
  std::vector<int> density_hidden = {64, 64};
  int density_feature_dim = 15;
  std::vector<int> color_hidden = {64, 64};
  int embedding_dim = 16;
  int sh_degree = 2;
  int num_images = 0;
  Aabb bounds;

  /// Smaller architecture used for 64x64 toy scenes on a CPU.
  static FieldConfig compact();

  GridShape grid_shape() const { return {grid_resolution, grid_channels, bounds}; }
  MlpShape density_shape() const;
  MlpShape color_shape() const;
  int color_input_dim() const;
  void validate() const;

  /// Canonical text form; hashed into checkpoints.
  std::string to_json() const;
  static FieldConfig from_json(const std::string& text);
  std::uint64_t hash() const;
  bool operator==(const FieldConfig&) const = default;
};

/// Parameter groups, each a contiguous range of the flat parameter vector.
enum class ParamGroup { kGrid = 0, kDensityMlp, kColorMlp, kEmbedding, kPoseCorrection };
inline constexpr int kParamGroupCount = 5;

struct ParameterLayout {
  std::size_t offset[kParamGroupCount + 1] = {};

  explicit ParameterLayout(const FieldConfig& config);
  ParameterLayout() = default;
  std::size_t begin(ParamGroup g) const { return offset[static_cast<int>(g)]; }
  std::size_t end(ParamGroup g) const { return offset[static_cast<int>(g) + 1]; }
  std::size_t size(ParamGroup g) const { return end(g) - begin(g); }
  std::size_t total() const { return offset[kParamGroupCount]; }
};

/// All learnable state of one field, stored as one flat vector with typed
/// views on top. Pose corrections are 6 values per image: rotation then
/// translation delta.
class FieldParameters {
 public:
  FieldParameters() = default;
  explicit FieldParameters(FieldConfig config);

  /// Grids ~ U(-1e-4, 1e-4), Kaiming-uniform MLP weights, zero biases,
  /// embeddings and pose corrections.
  static FieldParameters initialize(const FieldConfig& config, std::uint64_t seed);
  static FieldParameters from_flat(const FieldConfig& config, std::vector<double> values);

  const FieldConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::span<double> group(ParamGroup g) { return flat().subspan(layout_.begin(g), layout_.size(g)); }
  std::span<const double> group(ParamGroup g) const { return flat().subspan(layout_.begin(g), layout_.size(g)); }

  PlaneGridEncoder encoder() const { return PlaneGridEncoder(config_.grid_shape(), group(ParamGroup::kGrid)); }
  std::span<const double> embedding(int image) const;
  std::span<double> embedding(int image);
  Eigen::VectorXd mean_embedding() const;
  PoseCorrection pose_correction(int image) const;
  void set_pose_correction(int image, const PoseCorrection& correction);

  bool operator==(const FieldParameters& rhs) const {
    return config_ == rhs.config_ && values_ == rhs.values_;
  }

 private:
  FieldConfig config_;
  ParameterLayout layout_;
  std::vector<double> values_;
};

/// Per-sample output of the field.
struct FieldOutput {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
  std::vector<double> density_features;
};

double softplus(double x);
double sigmoid(double x);

/// Single-sample evaluation with plain loops (the serial reference path).
/// `color_params` overrides the color network when non-empty.
FieldOutput field_forward(const FieldParameters& params, const RaySample& sample,
                          std::span<const double> embedding, std::span<const double> color_params = {});

/// Column-batched samples.
struct SampleBatch {
  Eigen::Matrix3Xd positions;
  Eigen::Matrix3Xd directions;
  std::vector<int> image;  // embedding row per sample; -1 uses the override
  int size() const { return static_cast<int>(positions.cols()); }
};

/// Batched field evaluation with a recorded tape for reverse-mode gradients.
/// The density branch and the color branch can be run separately so one
/// density pass feeds several colorings.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const FieldParameters& params);

  /// Density branch: sigma and density features for every sample.
  void forward_density(const SampleBatch& batch, bool record);
  /// Color branch on top of the last density pass. `embedding` overrides the
  /// table for samples whose image is -1 (or for all samples when
  /// `override_all`); `color_params` overrides the color network.
  void forward_color(std::span<const double> embedding, bool override_all, std::span<const double> color_params,
                     bool record);
  void forward(const SampleBatch& batch, bool record) {
    forward_density(batch, record);
    forward_color({}, false, {}, record);
  }

  const Eigen::VectorXd& sigma() const { return sigma_; }
  const Eigen::Matrix3Xd& rgb() const { return rgb_; }
  /// Rows 0..F-1 are the density features.
  Eigen::Block<const Eigen::MatrixXd> density_features() const {
    return density_out_.bottomRows(density_out_.rows() - 1);
  }
  int clamped_count() const { return clamped_count_; }

  /// Reverse pass of the last recorded forward. Gradients are accumulated
  /// into `d_params` (flat layout); position/direction gradients are written
  /// when the pointers are non-null. Throws std::logic_error when no
  /// recorded forward matches.
  void backward(const Eigen::VectorXd& d_sigma, const Eigen::Matrix3Xd& d_rgb, std::span<double> d_params,
                Eigen::Matrix3Xd* d_positions, Eigen::Matrix3Xd* d_directions);

 private:
  const FieldParameters& params_;
  const FieldConfig& config_;
  MlpShape density_shape_;
  MlpShape color_shape_;
  DirectionEncoder dir_encoder_;

  const SampleBatch* batch_ = nullptr;
  bool density_recorded_ = false;
  bool color_recorded_ = false;
  int clamped_count_ = 0;

  Eigen::MatrixXd features_;     // 3C x S
  Eigen::MatrixXd density_out_;  // (1 + F) x S
  MlpTape density_tape_;
  Eigen::VectorXd sigma_;
  Eigen::MatrixXd color_in_;  // (F + SH + d) x S
  MlpTape color_tape_;
  Eigen::Matrix3Xd rgb_;
  std::vector<double> embedding_override_;
  bool override_all_ = false;
};

}  // namespace nerfaug
