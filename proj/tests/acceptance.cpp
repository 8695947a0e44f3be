// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "nerfaug/augment.hpp"
#include "nerfaug/checkpoint.hpp"
#include "nerfaug/gradcheck.hpp"
#include "nerfaug/manifest.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/toy_scene.hpp"
#include "nerfaug/training.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace nerfaug;

namespace {

constexpr std::uint64_t kSceneSeed = 1;
constexpr double kLightJitterDeg = 25.0;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

struct Scene {
  ToyScene toy;
  RayDataset train;
  std::vector<const ToyView*> heldout;
  std::vector<const ToyView*> trained;
};

Scene make_scene(double pose_noise_deg, double pose_noise_translation) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.light_jitter_deg = kLightJitterDeg;
  spec.pose_noise_deg = pose_noise_deg;
  spec.pose_noise_translation = pose_noise_translation;
  Scene s{generate_toy_scene(spec, kSceneSeed), {}, {}, {}};
  std::vector<Image> images, masks;
  std::vector<Pose> poses;
  for (const auto& v : s.toy.views) {
    if (v.heldout) {
      s.heldout.push_back(&v);
      continue;
    }
    s.trained.push_back(&v);
    images.push_back(v.image);
    masks.push_back(v.mask);
    poses.push_back(v.label_pose);
  }
  s.train = preprocess(images, poses, masks, s.toy.intrinsics, spec.bounds);
  return s;
}

TrainResult train(const Scene& s, TrainMode mode, const TrainOptions& base = {}) {
  TrainOptions opts = base;
  opts.on_record = [name = to_string(mode)](const TrainRecord& r) {
    if (r.iteration % 1000 == 0) std::fprintf(stderr, "  [%s] %s\n", name.c_str(), to_json_line(r).c_str());
  };
  return train_model(s.train, FieldConfig::compact(), TrainConfig::toy(), mode, opts);
}

RenderConfig eval_render() {
  RenderConfig rc;
  rc.samples_per_ray = TrainConfig::toy().samples_per_ray;
  return rc;
}

double heldout_mask_iou(const FieldParameters& p, const Scene& s, double tau) {
  RenderConfig rc = eval_render();
  rc.mask_threshold = tau;
  double sum = 0.0;
  for (const ToyView* v : s.heldout) sum += mask_iou(render_mask(p, v->true_pose, s.toy.intrinsics, rc), v->mask);
  return sum / static_cast<double>(s.heldout.size());
}

// ---- criterion 1 ----------------------------------------------------------

void gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const GradCheckProblem problem = make_gradcheck_problem(7);
  GradCheckOptions o;
  o.seed = 7;
  const GradCheckReport r = run_gradient_check(problem.dataset, problem.params, o);
  const double secs = seconds_since(start);
  std::set<ParamGroup> groups;
  for (const auto& e : r.entries) groups.insert(e.group);
  const bool pass = r.passed && r.entries.size() >= 100 && groups.size() == kParamGroupCount && secs < 120.0 &&
                    r.max_rel_error < 1e-4 && o.step == 1e-6;
  report(1, pass,
         fmt("%zu coordinates over %zu groups, max rel error %.3g (< 1e-4), %.1f s (< 120 s)", r.entries.size(),
             groups.size(), r.max_rel_error, secs));
}

// ---- criterion 2 ----------------------------------------------------------

void compositing_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(1, 256);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int ray = 0; ray < 1000; ++ray) {
    std::vector<CompositeSample> s(count(rng));
    for (auto& x : s) x = {u(rng) < 0.2 ? 0.0 : -std::log(u(rng)) * 8.0, Vec3(u(rng), u(rng), u(rng)), 0.001 + 0.2 * u(rng)};
    const auto r = composite(s);
    long double t = 1.0L, c[3] = {0, 0, 0}, o = 0;
    for (const auto& x : s) {
      const long double a = 1.0L - std::exp(-static_cast<long double>(x.sigma) * x.delta);
      for (int k = 0; k < 3; ++k) c[k] += t * a * x.rgb[k];
      o += t * a;
      t *= 1.0L - a;
    }
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(r.color[k] - static_cast<double>(c[k])));
    worst = std::max(worst, std::abs(r.opacity - static_cast<double>(o)));
  }
  const std::vector<CompositeSample> two = {{1.0, Vec3(1, 0, 0), 1.0}, {1.0, Vec3(0, 1, 0), 1.0}};
  const auto r2 = composite(two);
  const long double w1 = 1.0L - std::exp(-1.0L);
  const long double w2 = std::exp(-1.0L) * w1;
  const double err2 = std::max(std::abs(r2.weights[0] - static_cast<double>(w1)), std::abs(r2.weights[1] - static_cast<double>(w2)));
  const bool pass = worst <= 1e-10 && err2 <= 1e-10 && std::abs(r2.weights[0] - 0.63212) < 5e-6 &&
                    std::abs(r2.weights[1] - 0.23254) < 5e-6;
  report(2, pass,
         fmt("1000 rays max deviation %.2e (<= 1e-10); two-sample w = (%.5f, %.5f)", worst, r2.weights[0], r2.weights[1]));
}

// ---- criteria 5-7 ----------------------------------------------------------

void geometry_preservation(const FieldParameters& phi, const Scene& s) {
  AugmentConfig cfg;
  const auto dist = EmbeddingDistribution::from_params(phi);
  const RenderConfig rc = eval_render();
  const CameraIntrinsics& k = s.toy.intrinsics;
  Rng rng(5);
  std::vector<Pose> train_poses;
  for (const ToyView* v : s.trained) train_poses.push_back(v->label_pose);
  double mean_dist = 0.0;
  for (const auto& p : train_poses) mean_dist += p.translation().norm();
  mean_dist /= static_cast<double>(train_poses.size());

  int bad_opacity = 0, bad_mask = 0, renders = 0;
  const Eigen::VectorXd mean = phi.mean_embedding();
  const std::vector<double> mean_e(mean.data(), mean.data() + mean.size());
  for (int pose_index = 0; pose_index < 20; ++pose_index) {
    const Pose pose = sample_pose(k, Vec3::Zero(), 0.8 * mean_dist, 1.25 * mean_dist, 0.25, rng);
    const RenderOutput base = render_image(phi, pose, k, mean_e, rc);
    const Image base_mask = threshold_mask(base.opacity, cfg.mask_threshold);
    for (int c = 0; c < cfg.configs_per_pose(); ++c) {
      std::vector<double> e = mean_e;
      std::vector<double> net;
      if (c < cfg.illumination_configs) {
        const auto draw = sample_embedding(dist, choose_strategy(cfg.strategy_weights, rng), rng, std::nullopt, cfg.extrapolation);
        e.assign(draw.embedding.data(), draw.embedding.data() + draw.embedding.size());
      } else {
        net = perturb_color_network(phi, cfg.color_noise_scales[c % cfg.color_noise_scales.size()], rng);
      }
      const Coloring coloring{e, net};
      const AppearanceRenders out = render_appearances(phi, pose, k, std::span(&coloring, 1), rc);
      bad_opacity += out.opacity != base.opacity;
      bad_mask += threshold_mask(out.opacity, cfg.mask_threshold) != base_mask;
      ++renders;
    }
  }
  report(5, bad_opacity == 0 && bad_mask == 0,
         fmt("20 poses x %d configurations: %d opacity maps and %d masks differ from the unrandomized render",
             cfg.configs_per_pose(), bad_opacity, bad_mask));
}

void density_loss_checks(const Scene& s) {
  const double a = density_loss(std::vector<double>{1.0, 2.0}, 1.0);
  const double b = density_loss(std::vector<double>{1.0, 2.0}, 0.0);
  FieldConfig fc = FieldConfig::compact();
  fc.num_images = s.train.num_images();
  fc.bounds = s.train.bounds;
  const FieldParameters p = randomized_parameters(fc, 6);
  const TrainConfig defaults;
  BatchEvaluator ev(s.train, 32, 128);
  std::vector<std::size_t> batch(1024);
  for (std::size_t k = 0; k < batch.size(); ++k) batch[k] = (k * 7919) % s.train.entries.size();
  const BatchLoss l =
      ev.evaluate(p, batch, TrainMode::kGeometry, defaults.photo_weight, defaults.density_weight, std::nullopt, {});
  const bool pass = a == 0.0 && b == 5.0 && l.total == l.photo + l.density && defaults.photo_weight == 1.0 &&
                    defaults.density_weight == 1.0 && l.density > 0.0;
  report(6, pass,
         fmt("m=1 -> %g, m=0 sigma=(1,2) -> %g, L_psi - (L_photo + L_sigma) = %g", a, b, l.total - (l.photo + l.density)));
}

void embedding_strategies() {
  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> e(10, Eigen::VectorXd(16));
  for (auto& x : e)
    for (int k = 0; k < 16; ++k) x[k] = normal(rng);
  bool endpoints = true;
  for (int i = 0; i + 1 < 10; ++i) {
    endpoints &= interpolate_embeddings(e[i], e[i + 1], 0.0) == e[i];
    endpoints &= interpolate_embeddings(e[i], e[i + 1], 1.0) == e[i + 1];
  }
  Eigen::VectorXd p0(2), p1(2);
  p0 << 0, 0;
  p1 << 2, 0;
  const auto fit = EmbeddingDistribution::fit({p0, p1});
  Eigen::Matrix2d expected_cov;
  expected_cov << 1, 0, 0, 0;
  Eigen::Vector2d expected_mean(1, 0);
  const bool fit_ok = (fit.mean - expected_mean).norm() < 1e-15 && (fit.covariance - expected_cov).norm() < 1e-15;

  const int draws = 10000;
  std::array<int, kEmbeddingStrategyCount> counts{};
  for (int t = 0; t < draws; ++t) ++counts[static_cast<int>(choose_strategy({0.25, 0.25, 0.25, 0.25}, rng))];
  const double sd = std::sqrt(draws * 0.25 * 0.75);
  double worst_z = 0.0;
  for (int c : counts) worst_z = std::max(worst_z, std::abs(c - draws * 0.25) / sd);
  report(7, endpoints && fit_ok && worst_z <= 3.0,
         fmt("endpoints exact: %s; fit mu=(%g,%g) cov=diag(%g,%g); strategy counts %d/%d/%d/%d (max |z| %.2f <= 3)",
             endpoints ? "yes" : "no", fit.mean[0], fit.mean[1], fit.covariance(0, 0), fit.covariance(1, 1), counts[0],
             counts[1], counts[2], counts[3], worst_z));
}

// ---- criterion 8 -------------------------------------------------------------

void pose_refinement() {
  const double noise_deg = 1.0;
  const double noise_t = 0.02 * ToySceneSpec::sphere_and_box().orbit_radius;
  const Scene s = make_scene(noise_deg, noise_t);
  const TrainResult phi = train(s, TrainMode::kAppearance);
  double rot_before = 0.0, rot_after = 0.0, t_before = 0.0, t_after = 0.0;
  for (std::size_t i = 0; i < s.trained.size(); ++i) {
    const ToyView& v = *s.trained[i];
    const Pose corrected = apply_pose_correction(v.label_pose, phi.params.pose_correction(static_cast<int>(i)));
    rot_before += rotation_distance(v.label_pose.rotation(), v.true_pose.rotation());
    rot_after += rotation_distance(corrected.rotation(), v.true_pose.rotation());
    t_before += (v.label_pose.translation() - v.true_pose.translation()).norm();
    t_after += (corrected.translation() - v.true_pose.translation()).norm();
  }
  const double n = static_cast<double>(s.trained.size());
  const double deg = 180.0 / std::numbers::pi;
  const double rot_red = 1.0 - rot_after / rot_before;
  const double t_red = 1.0 - t_after / t_before;
  report(8, rot_red >= 0.5 && t_red >= 0.5,
         fmt("rotation %.3f -> %.3f deg (%.0f%% reduction), translation %.4f -> %.4f (%.0f%% reduction); need >= 50%%",
             rot_before / n * deg, rot_after / n * deg, 100 * rot_red, t_before / n, t_after / n, 100 * t_red));
}

// ---- criterion 9 ---------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void pipeline_determinism(const fs::path& work, const fs::path& phi, const fs::path& psi, const fs::path& manifest) {
  const auto run = [&](const fs::path& out) {
    fs::remove_all(out);
    const std::string cmd = std::string(NERFAUG_CLI_PATH) + " augment --appearance " + phi.string() + " --geometry " +
                            psi.string() + " --manifest " + manifest.string() + " --out " + out.string() +
                            " --n-labels 50 --illumination-configs 3 --color-configs 5 --width 96 --height 64" +
                            " --samples 48 --seed 11 2> " + (out.string() + ".log");
    return std::system(cmd.c_str());
  };
  const fs::path a = work / "augment_a", b = work / "augment_b";
  const int sa = run(a), sb = run(b);
  int images = 0, masks = 0, records = 0, missing = 0, differing = 0;
  std::set<std::string> mask_refs;
  if (sa == 0 && sb == 0) {
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), a);
      images += rel.begin()->string() == "images";
      masks += rel.begin()->string() == "masks";
      differing += slurp(e.path()) != slurp(b / rel);
    }
    std::ifstream in(a / "manifest.jsonl");
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      ++records;
      missing += !fs::exists(a / j["image"].get<std::string>()) || !fs::exists(a / j["mask"].get<std::string>());
      mask_refs.insert(j["mask"].get<std::string>());
    }
    if (header["n_cfg"] != 8 || header["n_labels"] != 50) ++missing;
  }
  const bool pass = sa == 0 && sb == 0 && images == 400 && masks == 50 && records == 400 && mask_refs.size() == 50 &&
                    missing == 0 && differing == 0;
  report(9, pass,
         fmt("exit %d/%d; %d images, %d masks, %d manifest records (%zu masks referenced, %d missing); %d files differ "
             "between runs",
             sa, sb, images, masks, records, mask_refs.size(), missing, differing));
}

// ---- criterion 10 --------------------------------------------------------------

void checkpoint_round_trip(const FieldParameters& p, const Scene& s, const fs::path& path) {
  const RenderConfig rc = eval_render();
  const ToyView& v = *s.heldout.front();
  const Eigen::VectorXd mean = p.mean_embedding();
  const std::vector<double> e(mean.data(), mean.data() + mean.size());
  const RenderOutput before = render_image(p, v.true_pose, s.toy.intrinsics, e, rc);
  save_checkpoint(path, p);
  const FieldParameters loaded = load_checkpoint(path);
  const RenderOutput after = render_image(loaded, v.true_pose, s.toy.intrinsics, e, rc);
  const bool pass = loaded == p && before.color == after.color && before.opacity == after.opacity;
  report(10, pass, fmt("parameters %s, color %s, opacity %s after save -> load",
                       loaded == p ? "identical" : "differ", before.color == after.color ? "bit-identical" : "differ",
                       before.opacity == after.opacity ? "bit-identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "nerfaug_acceptance";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--workdir") work = argv[i + 1];
  fs::create_directories(work);

  try {
    gradient_suite();
    compositing_oracle();

    // Criteria 3, 4, 5, 6, 9 and 10 share one scene with per-image lighting.
    const Scene scene = make_scene(0.0, 0.0);
    const auto t3 = std::chrono::steady_clock::now();
    const TrainResult phi = train(scene, TrainMode::kAppearance);
    std::vector<EvalView> views;
    for (const ToyView* v : scene.heldout) views.push_back({v->image, v->true_pose, -1});
    const double psnr = evaluate_psnr(phi.params, views, scene.toy.intrinsics, eval_render());
    const double secs3 = seconds_since(t3);
    report(3, psnr >= 25.0 && secs3 < 15 * 60.0,
           fmt("held-out PSNR %.2f dB (>= 25) over %zu views; training + evaluation %.0f s (< 900 s)", psnr,
               views.size(), secs3));

    TrainOptions geo_opts;
    for (int i = 0; i < scene.train.num_images(); ++i) geo_opts.fixed_pose_corrections.push_back(phi.params.pose_correction(i));
    const TrainResult psi = train(scene, TrainMode::kGeometry, geo_opts);
    const double iou_psi = heldout_mask_iou(psi.params, scene, 0.5);
    const double iou_phi = heldout_mask_iou(phi.params, scene, 0.5);
    report(4, iou_psi >= 0.95 && iou_psi > iou_phi,
           fmt("held-out mask IoU at tau=0.5: geometry model %.4f (>= 0.95), appearance model %.4f (must be lower)",
               iou_psi, iou_phi));

    geometry_preservation(phi.params, scene);
    density_loss_checks(scene);
    embedding_strategies();
    pose_refinement();

    const fs::path scene_dir = work / "scene";
    fs::remove_all(scene_dir);
    write_toy_scene(scene.toy, scene_dir);
    save_checkpoint(work / "phi.ckpt", phi.params);
    save_checkpoint(work / "psi.ckpt", psi.params);
    pipeline_determinism(work, work / "phi.ckpt", work / "psi.ckpt", scene_dir / "manifest.jsonl");
    checkpoint_round_trip(phi.params, scene, work / "roundtrip.ckpt");
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
