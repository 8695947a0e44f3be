// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/field.hpp"
#include "nerfaug/training.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace nerfaug {

struct GradCheckOptions {
  int rays = 64;
  int samples_per_ray = 24;
  /// Coordinates drawn per group: grid, density MLP, color MLP, embeddings,
  /// pose corrections.
  std::array<int, kParamGroupCount> per_group = {40, 20, 20, 20, 12};
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Coordinates where both gradients are below this are skipped; central
  /// differences cannot resolve them above round-off.
  double min_gradient = 1e-5;
  TrainMode mode = TrainMode::kGeometry;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  ParamGroup group = ParamGroup::kGrid;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  int kinks = 0;        // coordinates skipped because the step crossed a kink
  int below_floor = 0;  // coordinates skipped under min_gradient
  double seconds = 0.0;
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|); 0 when both are 0.
double relative_error(double analytic, double numeric);

/// Compares the batch-loss gradient against central differences on random
/// coordinates that the batch touches. A drawn coordinate is replaced by
/// another one when its forward and backward differences or its full- and
/// half-step central differences disagree (the step crossed a kink), or when
/// both gradients are below the floor.
GradCheckReport run_gradient_check(const RayDataset& dataset, const FieldParameters& params,
                                   const GradCheckOptions& options);

/// Parameters with every group away from its initial value: non-trivial
/// grids, random embeddings and small non-zero pose corrections.
FieldParameters randomized_parameters(const FieldConfig& config, std::uint64_t seed);

/// Small toy-scene dataset and a matching field for self-contained checks.
struct GradCheckProblem {
  RayDataset dataset;
  FieldParameters params;
};
GradCheckProblem make_gradcheck_problem(std::uint64_t seed);

}  // namespace nerfaug
