// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/augment.hpp"
#include "nerfaug/checkpoint.hpp"
#include "nerfaug/gradcheck.hpp"
#include "nerfaug/manifest.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/toy_scene.hpp"
#include "nerfaug/training.hpp"
#include "option_set.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace nerfaug::cli {
namespace {

void log_json(const json& j) { std::cerr << j.dump() << std::endl; }

void echo_config(const std::string& command, const OptionSet& options, const json& extra = {}) {
  json j = {{"event", "config"}, {"command", command}, {"options", options.effective()}};
  if (!extra.is_null()) j["resolved"] = extra;
  log_json(j);
}

// ---- toy-scene ------------------------------------------------------------

struct ToySceneArgs {
  std::string out;
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  int train_views = 100;
  int heldout_views = 20;
  double light_jitter_deg = 25.0;
  double ambient = 0.25;
  double orbit_radius = 3.5;
  double pose_noise_deg = 0.0;
  double pose_noise_translation = 0.0;
  bool grayscale = true;
};

int run_toy_scene(const ToySceneArgs& a) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.width = a.width;
  spec.height = a.height;
  spec.train_views = a.train_views;
  spec.heldout_views = a.heldout_views;
  spec.light_jitter_deg = a.light_jitter_deg;
  spec.ambient = a.ambient;
  spec.orbit_radius = a.orbit_radius;
  spec.pose_noise_deg = a.pose_noise_deg;
  spec.pose_noise_translation = a.pose_noise_translation;
  spec.grayscale = a.grayscale;
  const ToyScene scene = generate_toy_scene(spec, a.seed);
  write_toy_scene(scene, a.out);
  log_json({{"event", "toy-scene"}, {"views", scene.views.size()}, {"manifest", (fs::path(a.out) / "manifest.jsonl").string()}});
  return 0;
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
  std::string manifest;
  std::string out;
  std::string split = "train";
  double near = 0.0;
  double far = 0.0;
};

int run_preprocess(const PreprocessArgs& a) {
  const SceneManifest m = load_manifest(a.manifest);
  const LoadedFrames frames = load_frames(m, a.split);
  if (frames.images.empty()) throw std::invalid_argument("no frames in split '" + a.split + "'");
  const RayDataset d = preprocess(frames.images, frames.poses, frames.masks, m.intrinsics, m.bounds, a.near, a.far);
  d.save(a.out);
  log_json({{"event", "preprocess"}, {"images", d.num_images()}, {"rays", d.entries.size()}, {"near", d.near},
            {"far", d.far}, {"out", a.out}});
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string rays;
  std::string out;
  std::string mode = "appearance";
  std::string preset = "toy";
  std::string corrections_from;
  std::string log;
  int iterations = 0;
  int batch = 0;
  int samples = 0;
  double lr_grid = 0.0;
  double lr_mlp = 0.0;
  double lr_embedding = 0.0;
  double lr_pose = 0.0;
  double photo_weight = 1.0;
  double density_weight = 1.0;
  std::uint64_t seed = 0;
  int log_every = 100;
  int checkpoint_every = 0;
  std::string checkpoint_dir;
  int grid_resolution = 0;
  int grid_channels = 0;
  int embedding_dim = 0;
  int sh_degree = -1;
};

template <typename T>
void override_if(T& target, T value, T unset) {
  if (value != unset) target = value;
}

int run_train(const TrainArgs& a, const OptionSet& options) {
  if (a.preset != "toy" && a.preset != "full") throw std::invalid_argument("preset must be 'toy' or 'full'");
  const TrainMode mode = parse_train_mode(a.mode);
  TrainConfig tc = a.preset == "toy" ? TrainConfig::toy() : TrainConfig{};
  FieldConfig fc = a.preset == "toy" ? FieldConfig::compact() : FieldConfig{};
  override_if(tc.iterations, a.iterations, 0);
  override_if(tc.batch_rays, a.batch, 0);
  override_if(tc.samples_per_ray, a.samples, 0);
  override_if(tc.lr_grid, a.lr_grid, 0.0);
  override_if(tc.lr_mlp, a.lr_mlp, 0.0);
  override_if(tc.lr_embedding, a.lr_embedding, 0.0);
  override_if(tc.lr_pose, a.lr_pose, 0.0);
  tc.photo_weight = a.photo_weight;
  tc.density_weight = a.density_weight;
  tc.seed = a.seed;
  tc.log_every = a.log_every;
  tc.checkpoint_every = a.checkpoint_every;
  tc.checkpoint_dir = a.checkpoint_dir;
  override_if(fc.grid_resolution, a.grid_resolution, 0);
  override_if(fc.grid_channels, a.grid_channels, 0);
  override_if(fc.embedding_dim, a.embedding_dim, 0);
  override_if(fc.sh_degree, a.sh_degree, -1);
  tc.validate();

  const RayDataset dataset = RayDataset::load(a.rays);
  fc.num_images = dataset.num_images();
  fc.bounds = dataset.bounds;
  fc.validate();
  echo_config("train", options,
              {{"mode", to_string(mode)},
               {"field", json::parse(fc.to_json())},
               {"iterations", tc.iterations},
               {"batch_rays", tc.batch_rays},
               {"samples_per_ray", tc.samples_per_ray},
               {"lr", {tc.lr_grid, tc.lr_mlp, tc.lr_embedding, tc.lr_pose}},
               {"loss_weights", {tc.photo_weight, tc.density_weight}}});

  TrainOptions opts;
  if (!a.corrections_from.empty()) {
    if (mode != TrainMode::kGeometry) throw std::invalid_argument("corrections-from only applies to geometry mode");
    const FieldParameters source = load_checkpoint(a.corrections_from);
    if (source.config().num_images != dataset.num_images())
      throw std::invalid_argument("corrections-from: image count does not match the dataset");
    for (int i = 0; i < dataset.num_images(); ++i) opts.fixed_pose_corrections.push_back(source.pose_correction(i));
  }
  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot create log " + a.log);
  }
  opts.on_record = [&](const TrainRecord& r) {
    const std::string line = to_json_line(r);
    std::cerr << line << std::endl;
    if (log_file) log_file << line << std::endl;
  };
  const TrainResult result = train_model(dataset, fc, tc, mode, opts);
  save_checkpoint(a.out, result.params);
  log_json({{"event", "train"}, {"out", a.out}});
  return 0;
}

// ---- render / mask --------------------------------------------------------

struct ViewArgs {
  std::string model;
  std::string manifest;
  int frame = -1;
  std::vector<double> pose;  // w x y z tx ty tz
  std::string out;
  int samples = 64;
  int width = 0;
  int height = 0;
};

Pose pick_pose(const ViewArgs& a, const SceneManifest& m) {
  if (!a.pose.empty()) {
    if (a.pose.size() != 7) throw std::invalid_argument("--pose expects 7 numbers: w x y z tx ty tz");
    return Pose::from_wxyz(a.pose[0], a.pose[1], a.pose[2], a.pose[3], Vec3(a.pose[4], a.pose[5], a.pose[6]));
  }
  if (a.frame < 0 || a.frame >= static_cast<int>(m.frames.size()))
    throw std::invalid_argument("give --pose or a valid --frame index");
  return m.frames[a.frame].pose;
}

CameraIntrinsics view_intrinsics(const ViewArgs& a, const SceneManifest& m) {
  if (a.width <= 0 && a.height <= 0) return m.intrinsics;
  return rescale_intrinsics(m.intrinsics, a.width > 0 ? a.width : m.intrinsics.width,
                            a.height > 0 ? a.height : m.intrinsics.height);
}

struct RenderArgs : ViewArgs {
  std::string embedding = "mean";
  std::string opacity_out;
  std::vector<double> background;
};

std::vector<double> pick_embedding(const std::string& spec, const FieldParameters& params) {
  if (spec == "mean") {
    const Eigen::VectorXd mean = params.mean_embedding();
    return {mean.data(), mean.data() + mean.size()};
  }
  if (spec.find(',') == std::string::npos) {
    std::size_t used = 0;
    const int index = std::stoi(spec, &used);
    if (used != spec.size() || index < 0 || index >= params.config().num_images)
      throw std::invalid_argument("--embedding index out of range: " + spec);
    const auto e = params.embedding(index);
    return {e.begin(), e.end()};
  }
  std::vector<double> values;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  if (static_cast<int>(values.size()) != params.config().embedding_dim)
    throw std::invalid_argument("--embedding has the wrong dimension");
  return values;
}

int run_render(const RenderArgs& a) {
  const FieldParameters params = load_checkpoint(a.model);
  const SceneManifest m = load_manifest(a.manifest, {.check_files = false, .warn = {}});
  RenderConfig rc;
  rc.samples_per_ray = a.samples;
  if (!a.background.empty()) {
    if (a.background.size() != 3) throw std::invalid_argument("--background expects 3 numbers");
    rc.background = Vec3(a.background[0], a.background[1], a.background[2]);
  }
  const RenderOutput out = render_image(params, pick_pose(a, m), view_intrinsics(a, m), pick_embedding(a.embedding, params), rc);
  write_png(a.out, out.color);
  if (!a.opacity_out.empty()) write_png(a.opacity_out, out.opacity);
  log_json({{"event", "render"}, {"out", a.out}});
  return 0;
}

struct MaskArgs : ViewArgs {
  double threshold = 0.5;
};

int run_mask(const MaskArgs& a) {
  const FieldParameters params = load_checkpoint(a.model);
  const SceneManifest m = load_manifest(a.manifest, {.check_files = false, .warn = {}});
  RenderConfig rc;
  rc.samples_per_ray = a.samples;
  rc.mask_threshold = a.threshold;
  write_png(a.out, render_mask(params, pick_pose(a, m), view_intrinsics(a, m), rc));
  log_json({{"event", "mask"}, {"out", a.out}});
  return 0;
}

// ---- augment --------------------------------------------------------------

struct AugmentArgs {
  std::string appearance;
  std::string geometry;
  std::string manifest;
  std::string labels;
  std::string out;
  int n_labels = 750;
  int illumination_configs = 24;
  int color_configs = 40;
  std::vector<double> strategy_weights = {0.25, 0.25, 0.25, 0.25};
  double extrapolation_below = 0.5;
  double extrapolation_above = 0.5;
  std::vector<double> noise_scales = {0.05, 0.10};
  double threshold = 0.5;
  std::vector<std::string> backgrounds;
  double background_probability = 0.5;
  int width = 768;
  int height = 512;
  int samples = 64;
  bool grayscale = true;
  double min_distance = 0.0;
  double max_distance = 0.0;
  double border = 0.25;
  std::uint64_t seed = 0;
};

std::vector<fs::path> expand_backgrounds(const std::vector<std::string>& items) {
  std::vector<fs::path> out;
  for (const auto& item : items) {
    if (fs::is_directory(item)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(item))
        if (e.path().extension() == ".png") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(item);
    }
  }
  return out;
}

int run_augment(const AugmentArgs& a, const OptionSet& options) {
  AugmentConfig cfg;
  cfg.n_labels = a.n_labels;
  cfg.illumination_configs = a.illumination_configs;
  cfg.color_configs = a.color_configs;
  if (a.strategy_weights.size() != kEmbeddingStrategyCount)
    throw std::invalid_argument("strategy-weights expects 4 numbers (uniform interpolate extrapolate gaussian)");
  std::copy(a.strategy_weights.begin(), a.strategy_weights.end(), cfg.strategy_weights.begin());
  cfg.extrapolation = {a.extrapolation_below, a.extrapolation_above};
  cfg.color_noise_scales = a.noise_scales;
  cfg.mask_threshold = a.threshold;
  cfg.backgrounds = expand_backgrounds(a.backgrounds);
  cfg.background_probability = a.background_probability;
  cfg.width = a.width;
  cfg.height = a.height;
  cfg.samples_per_ray = a.samples;
  cfg.grayscale = a.grayscale;
  cfg.pose_sampler = {a.min_distance, a.max_distance, a.border};
  cfg.seed = a.seed;
  cfg.validate();
  echo_config("augment", options, {{"n_cfg", cfg.configs_per_pose()}, {"backgrounds", cfg.backgrounds.size()}});

  const FieldParameters phi = load_checkpoint(a.appearance);
  const FieldParameters psi = load_checkpoint(a.geometry);
  const SceneManifest m = load_manifest(a.manifest, {.check_files = false, .warn = {}});
  std::vector<Pose> training;
  for (const auto& f : m.frames)
    if (f.split == "train") training.push_back(f.pose);
  const std::vector<Pose> labels = a.labels.empty() ? std::vector<Pose>{} : load_pose_labels(a.labels);
  const AugmentResult r = generate_augmented_set(phi, psi, m.intrinsics, training, labels, cfg, a.out);
  log_json({{"event", "augment"},
            {"images", r.samples.size()},
            {"masks", r.masks.size()},
            {"errors", r.error_count},
            {"manifest", r.manifest.string()}});
  return r.error_count == 0 ? 0 : 3;
}

// ---- eval-psnr ------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string manifest;
  std::string split = "heldout";
  int samples = 64;
};

int run_eval(const EvalArgs& a) {
  const FieldParameters params = load_checkpoint(a.model);
  const SceneManifest m = load_manifest(a.manifest);
  std::vector<EvalView> views;
  int train_index = 0;
  for (std::size_t k = 0; k < m.frames.size(); ++k) {
    const ManifestFrame& f = m.frames[k];
    const int trained = f.split == "train" ? train_index++ : -1;
    if (f.split != a.split) continue;
    views.push_back({to_rgb(read_png(m.resolve(f.image))), f.pose, trained});
  }
  if (views.empty()) throw std::invalid_argument("no frames in split '" + a.split + "'");
  RenderConfig rc;
  rc.samples_per_ray = a.samples;
  const double psnr = evaluate_psnr(params, views, m.intrinsics, rc);
  std::cout << json({{"split", a.split}, {"views", views.size()}, {"psnr", psnr}}).dump() << std::endl;
  return 0;
}

// ---- check-grads ----------------------------------------------------------

struct GradArgs {
  std::uint64_t seed = 0;
  int rays = 64;
  int samples = 24;
  double step = 1e-6;
  double tolerance = 1e-4;
  std::string mode = "geometry";
};

int run_check_grads(const GradArgs& a) {
  const GradCheckProblem problem = make_gradcheck_problem(a.seed);
  GradCheckOptions o;
  o.rays = a.rays;
  o.samples_per_ray = a.samples;
  o.step = a.step;
  o.tolerance = a.tolerance;
  o.mode = parse_train_mode(a.mode);
  o.seed = a.seed;
  const GradCheckReport r = run_gradient_check(problem.dataset, problem.params, o);
  static const char* kGroupNames[] = {"grid", "density_mlp", "color_mlp", "embedding", "pose_correction"};
  for (const auto& e : r.entries) {
    std::cout << json({{"group", kGroupNames[static_cast<int>(e.group)]},
                       {"index", e.index},
                       {"analytic", e.analytic},
                       {"numeric", e.numeric},
                       {"rel_error", e.rel_error}})
                     .dump()
              << "\n";
  }
  std::cout << json({{"coordinates", r.entries.size()},
                     {"max_rel_error", r.max_rel_error},
                     {"skipped_kinks", r.kinks},
                     {"skipped_below_floor", r.below_floor},
                     {"seconds", r.seconds},
                     {"passed", r.passed}})
                   .dump()
            << std::endl;
  return r.passed ? 0 : 1;
}

}  // namespace
}  // namespace nerfaug::cli

int main(int argc, char** argv) {
  using namespace nerfaug::cli;
  CLI::App app{"NeRF-based data augmentation: train, render and generate augmented datasets"};
  app.require_subcommand(1);

  ToySceneArgs toy;
  auto* toy_cmd = app.add_subcommand("toy-scene", "Render the sphere-and-box oracle scene");
  OptionSet toy_opts(toy_cmd);
  toy_opts.add("out", toy.out, "Output directory")->required();
  toy_opts.add("seed", toy.seed, "Random seed");
  toy_opts.add("width", toy.width, "Image width");
  toy_opts.add("height", toy.height, "Image height");
  toy_opts.add("train-views", toy.train_views, "Training views");
  toy_opts.add("heldout-views", toy.heldout_views, "Held-out views");
  toy_opts.add("light-jitter-deg", toy.light_jitter_deg, "Per-image light cone half-angle");
  toy_opts.add("ambient", toy.ambient, "Ambient light fraction");
  toy_opts.add("orbit-radius", toy.orbit_radius, "Camera distance from the scene center");
  toy_opts.add("pose-noise-deg", toy.pose_noise_deg, "Rotation noise on exported training labels");
  toy_opts.add("pose-noise-translation", toy.pose_noise_translation, "Translation noise on exported labels");
  toy_opts.add("grayscale", toy.grayscale, "Write single-channel images");

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Build the ray dataset from a scene manifest");
  OptionSet pre_opts(pre_cmd);
  pre_opts.add("manifest", pre.manifest, "Scene manifest")->required();
  pre_opts.add("out", pre.out, "Ray dataset file")->required();
  pre_opts.add("split", pre.split, "Split to use");
  pre_opts.add("near", pre.near, "Near bound (0: derive from the scene box)");
  pre_opts.add("far", pre.far, "Far bound (0: derive from the scene box)");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train the appearance or the geometry model");
  OptionSet tr_opts(tr_cmd);
  tr_opts.add("rays", tr.rays, "Ray dataset from preprocess")->required();
  tr_opts.add("out", tr.out, "Checkpoint to write")->required();
  tr_opts.add("mode", tr.mode, "appearance or geometry");
  tr_opts.add("preset", tr.preset, "toy (compact model, 3k iterations) or full");
  tr_opts.add("corrections-from", tr.corrections_from, "Appearance checkpoint whose pose corrections are frozen inputs");
  tr_opts.add("log", tr.log, "JSON Lines training log");
  tr_opts.add("iterations", tr.iterations, "Iterations (0: preset)");
  tr_opts.add("batch", tr.batch, "Rays per batch (0: preset)");
  tr_opts.add("samples", tr.samples, "Samples per ray (0: preset)");
  tr_opts.add("lr-grid", tr.lr_grid, "Grid learning rate (0: preset)");
  tr_opts.add("lr-mlp", tr.lr_mlp, "MLP learning rate (0: preset)");
  tr_opts.add("lr-embedding", tr.lr_embedding, "Embedding learning rate (0: preset)");
  tr_opts.add("lr-pose", tr.lr_pose, "Pose-correction learning rate (0: preset)");
  tr_opts.add("photo-weight", tr.photo_weight, "Photometric loss weight");
  tr_opts.add("density-weight", tr.density_weight, "Density loss weight (geometry mode)");
  tr_opts.add("seed", tr.seed, "Random seed");
  tr_opts.add("log-every", tr.log_every, "Iterations between log records");
  tr_opts.add("checkpoint-every", tr.checkpoint_every, "Iterations between checkpoints (0: off)");
  tr_opts.add("checkpoint-dir", tr.checkpoint_dir, "Directory for periodic checkpoints");
  tr_opts.add("grid-resolution", tr.grid_resolution, "Plane grid resolution (0: preset)");
  tr_opts.add("grid-channels", tr.grid_channels, "Channels per plane (0: preset)");
  tr_opts.add("embedding-dim", tr.embedding_dim, "Appearance embedding size (0: preset)");
  tr_opts.add("sh-degree", tr.sh_degree, "Spherical harmonics degree (-1: preset)");

  RenderArgs rd;
  auto* rd_cmd = app.add_subcommand("render", "Render one view");
  OptionSet rd_opts(rd_cmd);
  rd_opts.add("model", rd.model, "Checkpoint")->required();
  rd_opts.add("manifest", rd.manifest, "Scene manifest providing the intrinsics")->required();
  rd_opts.add("frame", rd.frame, "Use this manifest frame's pose label");
  rd_opts.add("pose", rd.pose, "Pose as w x y z tx ty tz");
  rd_opts.add("embedding", rd.embedding, "mean, a training image index, or comma-separated values");
  rd_opts.add("out", rd.out, "Output PNG")->required();
  rd_opts.add("opacity-out", rd.opacity_out, "Optional opacity PNG");
  rd_opts.add("background", rd.background, "Background color r g b");
  rd_opts.add("samples", rd.samples, "Samples per ray");
  rd_opts.add("width", rd.width, "Output width (0: manifest)");
  rd_opts.add("height", rd.height, "Output height (0: manifest)");

  MaskArgs mk;
  auto* mk_cmd = app.add_subcommand("mask", "Render a thresholded opacity mask");
  OptionSet mk_opts(mk_cmd);
  mk_opts.add("model", mk.model, "Checkpoint (normally the geometry model)")->required();
  mk_opts.add("manifest", mk.manifest, "Scene manifest providing the intrinsics")->required();
  mk_opts.add("frame", mk.frame, "Use this manifest frame's pose label");
  mk_opts.add("pose", mk.pose, "Pose as w x y z tx ty tz");
  mk_opts.add("out", mk.out, "Output PNG")->required();
  mk_opts.add("threshold", mk.threshold, "Opacity threshold");
  mk_opts.add("samples", mk.samples, "Samples per ray");
  mk_opts.add("width", mk.width, "Output width (0: manifest)");
  mk_opts.add("height", mk.height, "Output height (0: manifest)");

  AugmentArgs au;
  auto* au_cmd = app.add_subcommand("augment", "Generate the augmented dataset");
  OptionSet au_opts(au_cmd);
  au_opts.add("appearance", au.appearance, "Appearance model checkpoint")->required();
  au_opts.add("geometry", au.geometry, "Geometry model checkpoint")->required();
  au_opts.add("manifest", au.manifest, "Scene manifest (intrinsics and training labels)")->required();
  au_opts.add("labels", au.labels, "Pose label file; empty samples poses");
  au_opts.add("out", au.out, "Output directory")->required();
  au_opts.add("n-labels", au.n_labels, "Poses to sample when no label file is given");
  au_opts.add("illumination-configs", au.illumination_configs, "Embedding-randomized images per pose");
  au_opts.add("color-configs", au.color_configs, "Color-network-perturbed images per pose");
  au_opts.add("strategy-weights", au.strategy_weights, "uniform interpolate extrapolate gaussian");
  au_opts.add("extrapolation-below", au.extrapolation_below, "alpha ~ U(-below, 0) for extrapolation");
  au_opts.add("extrapolation-above", au.extrapolation_above, "alpha ~ U(1, 1 + above) for extrapolation");
  au_opts.add("noise-scales", au.noise_scales, "Color-network noise scales, cycled");
  au_opts.add("threshold", au.threshold, "Mask opacity threshold");
  au_opts.add("backgrounds", au.backgrounds, "Background PNG files or directories");
  au_opts.add("background-probability", au.background_probability, "Chance of compositing a background");
  au_opts.add("width", au.width, "Output width");
  au_opts.add("height", au.height, "Output height");
  au_opts.add("samples", au.samples, "Samples per ray");
  au_opts.add("grayscale", au.grayscale, "Write single-channel images");
  au_opts.add("min-distance", au.min_distance, "Sampler distance lower bound (0: from labels)");
  au_opts.add("max-distance", au.max_distance, "Sampler distance upper bound (0: from labels)");
  au_opts.add("border", au.border, "Image fraction kept clear of the scene center");
  au_opts.add("seed", au.seed, "Random seed");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval-psnr", "Mean PSNR over a manifest split");
  OptionSet ev_opts(ev_cmd);
  ev_opts.add("model", ev.model, "Checkpoint")->required();
  ev_opts.add("manifest", ev.manifest, "Scene manifest")->required();
  ev_opts.add("split", ev.split, "Split to evaluate");
  ev_opts.add("samples", ev.samples, "Samples per ray");

  GradArgs gr;
  auto* gr_cmd = app.add_subcommand("check-grads", "Finite-difference gradient check");
  OptionSet gr_opts(gr_cmd);
  gr_opts.add("seed", gr.seed, "Random seed");
  gr_opts.add("rays", gr.rays, "Rays in the batch");
  gr_opts.add("samples", gr.samples, "Samples per ray");
  gr_opts.add("step", gr.step, "Central-difference step");
  gr_opts.add("tolerance", gr.tolerance, "Relative error tolerance");
  gr_opts.add("mode", gr.mode, "Loss to check: appearance or geometry");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*toy_cmd) {
      toy_opts.apply_config();
      echo_config("toy-scene", toy_opts);
      return run_toy_scene(toy);
    }
    if (*pre_cmd) {
      pre_opts.apply_config();
      echo_config("preprocess", pre_opts);
      return run_preprocess(pre);
    }
    if (*tr_cmd) {
      tr_opts.apply_config();
      return run_train(tr, tr_opts);
    }
    if (*rd_cmd) {
      rd_opts.apply_config();
      echo_config("render", rd_opts);
      return run_render(rd);
    }
    if (*mk_cmd) {
      mk_opts.apply_config();
      echo_config("mask", mk_opts);
      return run_mask(mk);
    }
    if (*au_cmd) {
      au_opts.apply_config();
      return run_augment(au, au_opts);
    }
    if (*ev_cmd) {
      ev_opts.apply_config();
      echo_config("eval-psnr", ev_opts);
      return run_eval(ev);
    }
    if (*gr_cmd) {
      gr_opts.apply_config();
      echo_config("check-grads", gr_opts);
      return run_check_grads(gr);
    }
  } catch (const nerfaug::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
