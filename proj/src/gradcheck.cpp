// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/gradcheck.hpp"

#include "nerfaug/toy_scene.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace nerfaug {

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return scale == 0.0 ? 0.0 : std::abs(analytic - numeric) / scale;
}

GradCheckReport run_gradient_check(const RayDataset& dataset, const FieldParameters& params,
                                   const GradCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(mix_seed(options.seed, 0x67726164ULL));
  std::uniform_int_distribution<std::size_t> pick_ray(0, dataset.entries.size() - 1);
  std::vector<std::size_t> batch(options.rays);
  for (auto& b : batch) b = pick_ray(rng);
  const std::uint64_t jitter = mix_seed(options.seed, 0x6a6974ULL);

  BatchEvaluator evaluator(dataset, options.samples_per_ray, 32);
  std::vector<double> grad(params.flat().size());
  evaluator.evaluate(params, batch, options.mode, 1.0, 1.0, jitter, grad);

  FieldParameters probe = params;
  const auto loss_at = [&](std::size_t k, double value) {
    probe.flat()[k] = value;
    const double l = evaluator.evaluate(probe, batch, options.mode, 1.0, 1.0, jitter, {}).total;
    probe.flat()[k] = params.flat()[k];
    return l;
  };

  GradCheckReport report;
  const double base = evaluator.evaluate(params, batch, options.mode, 1.0, 1.0, jitter, {}).total;
  const ParameterLayout& layout = params.layout();
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto group = static_cast<ParamGroup>(g);
    std::vector<std::size_t> touched;
    for (std::size_t k = layout.begin(group); k < layout.end(group); ++k)
      if (grad[k] != 0.0) touched.push_back(k);
    std::shuffle(touched.begin(), touched.end(), rng);
    int taken = 0;
    for (std::size_t k : touched) {
      if (taken == options.per_group[g]) break;
      const double x = params.flat()[k];
      const double up = loss_at(k, x + options.step);
      const double down = loss_at(k, x - options.step);
      const double forward = (up - base) / options.step;
      const double backward = (base - down) / options.step;
      const double numeric = (up - down) / (2.0 * options.step);
      if (std::max(std::abs(grad[k]), std::abs(numeric)) < options.min_gradient) {
        ++report.below_floor;
        continue;
      }
      // A step that crosses a ReLU or grid-cell kink makes the one-sided
      // slopes disagree or the half step give a different answer; central
      // differences are meaningless there.
      const double half = options.step / 2.0;
      const double numeric_half = (loss_at(k, x + half) - loss_at(k, x - half)) / options.step;
      if (relative_error(forward, backward) > options.tolerance ||
          relative_error(numeric, numeric_half) > options.tolerance / 2.0) {
        ++report.kinks;
        continue;
      }
      GradCheckEntry e{group, k, grad[k], numeric, relative_error(grad[k], numeric)};
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(e);
      ++taken;
    }
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) { return a.index < b.index; });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.passed = !report.entries.empty() && report.max_rel_error < options.tolerance;
  return report;
}

FieldParameters randomized_parameters(const FieldConfig& config, std::uint64_t seed) {
  FieldParameters p = FieldParameters::initialize(config, seed);
  std::mt19937_64 rng(mix_seed(seed, 0x72616e64ULL));
  std::uniform_real_distribution<double> grid(-0.5, 0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : p.group(ParamGroup::kGrid)) v = grid(rng);
  for (double& v : p.group(ParamGroup::kEmbedding)) v = 0.3 * normal(rng);
  for (int i = 0; i < config.num_images; ++i) {
    PoseCorrection c;
    c.rotation = 0.03 * Vec3(normal(rng), normal(rng), normal(rng));
    c.translation = 0.02 * Vec3(normal(rng), normal(rng), normal(rng));
    p.set_pose_correction(i, c);
  }
  return p;
}

GradCheckProblem make_gradcheck_problem(std::uint64_t seed) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.width = 16;
  spec.height = 16;
  spec.train_views = 4;
  spec.heldout_views = 0;
  spec.light_jitter_deg = 20.0;
  const ToyScene scene = generate_toy_scene(spec, seed);
  std::vector<Image> images, masks;
  std::vector<Pose> poses;
  for (const auto& v : scene.views) {
    images.push_back(v.image);
    masks.push_back(v.mask);
    poses.push_back(v.label_pose);
  }
  GradCheckProblem problem{preprocess(images, poses, masks, scene.intrinsics, spec.bounds), {}};
  FieldConfig fc = FieldConfig::compact();
  fc.grid_resolution = 16;
  fc.num_images = problem.dataset.num_images();
  fc.bounds = spec.bounds;
  problem.params = randomized_parameters(fc, seed);
  return problem;
}

}  // namespace nerfaug
