// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/render.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nerfaug {

/// One training ray: label-frame origin/direction, observed pixel (background
/// already removed), binary mask value and source image. `near`/`far` is the
/// sampling interval clipped to the scene box.
struct RayDatasetEntry {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Vec3 pixel = Vec3::Zero();
  double mask = 1.0;
  int image = 0;
  double near = 0.0;
  double far = 0.0;
};

struct RayDataset {
  CameraIntrinsics intrinsics;
  Aabb bounds;
  double near = 0.0;
  double far = 0.0;
  std::vector<Pose> label_poses;
  std::vector<RayDatasetEntry> entries;

  int num_images() const { return static_cast<int>(label_poses.size()); }
  CorrectionContext correction_context() const;

  void save(const std::filesystem::path& path) const;
  static RayDataset load(const std::filesystem::path& path);
  bool operator==(const RayDataset& rhs) const;
};

/// Builds the ray dataset: masks zero the background of each image and one
/// entry is emitted per pixel. Non-positive near/far fall back to the scene
/// bounding-sphere defaults over all cameras.
RayDataset preprocess(std::span<const Image> images, std::span<const Pose> poses, std::span<const Image> masks,
                      const CameraIntrinsics& intrinsics, const Aabb& bounds, double near = 0.0, double far = 0.0);

/// Mean squared error over rays and channels. Throws on empty or mismatched
/// batches.
double photometric_loss(std::span<const Vec3> predicted, std::span<const Vec3> observed);

/// Sum of sigma_n^2 (1 - m) over one ray's samples.
double density_loss(std::span<const double> sigma, double mask);

enum class TrainMode { kAppearance, kGeometry };
TrainMode parse_train_mode(const std::string& text);
std::string to_string(TrainMode mode);

struct TrainConfig {
  int batch_rays = 4096;
  int iterations = 30000;
  int samples_per_ray = 64;
  double lr_grid = 1e-2;
  double lr_mlp = 1e-3;
  double lr_embedding = 1e-3;
  double lr_pose = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-15;
  double photo_weight = 1.0;
  double density_weight = 1.0;
  std::uint64_t seed = 0;
  int chunk_rays = 256;
  int log_every = 100;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  int max_nonfinite_batches = 3;

  /// Settings for the 64x64 toy scenes.
  static TrainConfig toy();
  void validate() const;
};

struct BatchLoss {
  double photo = 0.0;
  double density = 0.0;
  double total = 0.0;
};

/// Reusable buffers for batched loss/gradient evaluation. Gradients are
/// accumulated per fixed-size ray chunk and reduced in chunk order, so results
/// do not depend on the thread count.
class BatchEvaluator {
 public:
  BatchEvaluator(const RayDataset& dataset, int samples_per_ray, int chunk_rays);

  /// Loss of the given entries. In appearance mode the loss is
  /// photo_weight * L_photo; in geometry mode it adds density_weight * L_sigma.
  /// Pose corrections are always applied to the label rays. When `gradient`
  /// is non-empty it receives d(loss)/d(params) (overwritten).
  BatchLoss evaluate(const FieldParameters& params, std::span<const std::size_t> indices, TrainMode mode,
                     double photo_weight, double density_weight, std::optional<std::uint64_t> jitter_seed,
                     std::span<double> gradient);

 private:
  const RayDataset& dataset_;
  CorrectionContext corrections_;
  int samples_per_ray_;
  int chunk_rays_;
  std::vector<std::vector<double>> chunk_grads_;
};

/// Adam with one learning rate per parameter group; a zero rate leaves the
/// group bit-identical.
class Adam {
 public:
  Adam(const ParameterLayout& layout, double beta1, double beta2, double epsilon);
  void step(std::span<double> params, std::span<const double> grad, const std::array<double, kParamGroupCount>& lr);
  long steps() const { return t_; }

 private:
  ParameterLayout layout_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

/// Epoch-wise random permutation over dataset entries.
class RayBatcher {
 public:
  RayBatcher(std::size_t count, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t batch);
  /// Completed passes over the dataset.
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  std::mt19937_64 rng_;
};

struct TrainRecord {
  int iteration = 0;
  double photo = 0.0;
  double density = 0.0;
  double psnr = 0.0;
  double wall_seconds = 0.0;
};

std::string to_json_line(const TrainRecord& record);

struct TrainResult {
  FieldParameters params;
  std::vector<TrainRecord> history;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  /// Geometry mode: pose corrections learned by the appearance model, used
  /// as frozen inputs. Empty keeps zero corrections.
  std::vector<PoseCorrection> fixed_pose_corrections;
  /// Called for every logged record.
  std::function<void(const TrainRecord&)> on_record;
  /// Starting parameters; defaults to FieldParameters::initialize.
  std::optional<FieldParameters> initial;
};

TrainResult train_model(const RayDataset& dataset, const FieldConfig& field_config, const TrainConfig& config,
                        TrainMode mode, const TrainOptions& options = {});

/// 10 log10(1 / mse) on [0, 1] data, capped at 99 dB.
double psnr_from_mse(double mse);
inline constexpr double kPsnrCap = 99.0;

double image_mse(const Image& a, const Image& b);

struct EvalView {
  Image image;
  Pose pose;
  int trained_index = -1;  // >= 0: use that image's embedding and pose correction
};

/// Mean PSNR over the views. Trained views use their own embedding and
/// corrected pose; held-out views use the mean embedding and the label pose.
double evaluate_psnr(const FieldParameters& params, std::span<const EvalView> views, const CameraIntrinsics& intrinsics,
                     const RenderConfig& config);

}  // namespace nerfaug
