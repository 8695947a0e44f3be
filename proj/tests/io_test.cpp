// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/checkpoint.hpp"
#include "nerfaug/gradcheck.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/manifest.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/toy_scene.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

namespace fs = std::filesystem;

namespace nerfaug {
namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// ---- images ------------------------------------------------------------------

TEST(Png, RoundTripOnTheByteGrid) {
  TempDir dir("nerfaug_png");
  for (int channels = 1; channels <= 4; ++channels) {
    Image img(7, 5, channels);
    for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = static_cast<double>((k * 37) % 256) / 255.0;
    const fs::path p = dir.path / ("img" + std::to_string(channels) + ".png");
    write_png(p, img);
    EXPECT_EQ(read_png(p), img);
  }
  EXPECT_THROW(read_png(dir.path / "missing.png"), std::runtime_error);
  write_text(dir.path / "bad.png", "not a png");
  EXPECT_THROW(read_png(dir.path / "bad.png"), std::runtime_error);
}

TEST(Png, ClampsAndRounds) {
  TempDir dir("nerfaug_png_clamp");
  Image img(3, 1, 1);
  img.data = {-0.5, 1.7, 0.5};
  write_png(dir.path / "c.png", img);
  const Image back = read_png(dir.path / "c.png");
  EXPECT_EQ(back.data[0], 0.0);
  EXPECT_EQ(back.data[1], 1.0);
  EXPECT_EQ(back.data[2], 128.0 / 255.0);
}

TEST(ImageOps, GrayAndRgb) {
  Image rgb(1, 1, 3);
  rgb.data = {0.3, 0.6, 0.9};
  EXPECT_NEAR(to_gray(rgb).data[0], 0.6, 1e-15);
  const Image g = to_rgb(Image(2, 2, 1, 0.25));
  EXPECT_EQ(g.channels, 3);
  for (double v : g.data) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(with_alpha(rgb, Image(1, 1, 1, 0.5)).data, (std::vector<double>{0.3, 0.6, 0.9, 0.5}));
}

TEST(ImageOps, AreaResize) {
  Image img(4, 2, 1);
  img.data = {0, 1, 2, 3, 4, 5, 6, 7};
  const Image half = resize_area(img, 2, 1);
  EXPECT_DOUBLE_EQ(half.data[0], (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(half.data[1], (2 + 3 + 6 + 7) / 4.0);
  EXPECT_EQ(resize_area(img, 4, 2), img);
  // Non-integer ratio: 3 -> 2 pixels, each output covers 1.5 inputs.
  Image row(3, 1, 1);
  row.data = {0.0, 3.0, 6.0};
  const Image r = resize_area(row, 2, 1);
  EXPECT_DOUBLE_EQ(r.data[0], (0.0 + 0.5 * 3.0) / 1.5);
  EXPECT_DOUBLE_EQ(r.data[1], (0.5 * 3.0 + 6.0) / 1.5);
  EXPECT_THROW(resize_area(img, 0, 1), std::invalid_argument);
}

// ---- toy scene ------------------------------------------------------------------

TEST(ToyScene, EmptySceneIsBlack) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.primitives.clear();
  spec.width = spec.height = 16;
  spec.train_views = 3;
  spec.heldout_views = 1;
  for (const auto& v : generate_toy_scene(spec, 1).views) {
    for (double x : v.image.data) EXPECT_EQ(x, 0.0);
    for (double x : v.mask.data) EXPECT_EQ(x, 0.0);
  }
}

TEST(ToyScene, CenteredSphereSilhouetteIsAnalyticDisc) {
  ToySceneSpec spec;
  spec.primitives = {ToyPrimitive::sphere(Vec3::Zero(), 1.0, Vec3::Constant(0.8))};
  spec.width = spec.height = 64;
  spec.focal_scale = 1.0;
  const CameraIntrinsics k = spec.intrinsics();
  for (const Vec3& eye : {Vec3(0, -4, 0), Vec3(4, 0, 0), Vec3(0, 2.4, 3.2)}) {
    const ToyView v = render_toy_view(spec, look_at(eye, Vec3::Zero()), Vec3(0, 0, -1));
    // A pixel-center ray hits the sphere iff its angle to the axis is at most
    // asin(1/4), i.e. (x^2 + y^2) / f^2 <= tan^2(asin(1/4)) = 1/15.
    int inside = 0;
    for (int j = 0; j < 64; ++j) {
      for (int i = 0; i < 64; ++i) {
        const double x = i + 0.5 - k.cx, y = j + 0.5 - k.cy;
        const bool disc = (x * x + y * y) / (k.fx * k.fx) <= 1.0 / 15.0;
        EXPECT_EQ(v.mask.at(i, j), disc ? 1.0 : 0.0) << i << "," << j;
        inside += disc;
      }
    }
    EXPECT_GT(inside, 800);
  }
}

TEST(ToyScene, MaskMarksExactlyThePixelsThatHitSomething) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.width = spec.height = 40;
  spec.train_views = 6;
  spec.heldout_views = 2;
  spec.light_jitter_deg = 30.0;
  const ToyScene scene = generate_toy_scene(spec, 2);
  for (const auto& v : scene.views) {
    const auto rays = cast_all_rays(v.true_pose, scene.intrinsics);
    for (std::size_t p = 0; p < rays.size(); ++p) {
      const auto [color, hit] = trace_toy_ray(spec, rays[p], v.light);
      EXPECT_EQ(v.mask.data[p], hit ? 1.0 : 0.0);
      if (!hit) {
        EXPECT_EQ(v.image.data[p], 0.0);
      }
    }
  }
}

TEST(ToyScene, PoseNoise) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.width = spec.height = 8;
  spec.train_views = 20;
  spec.heldout_views = 5;
  for (const auto& v : generate_toy_scene(spec, 3).views) {
    EXPECT_EQ(v.label_pose.rotation().coeffs(), v.true_pose.rotation().coeffs());
    EXPECT_EQ(v.label_pose.translation(), v.true_pose.translation());
  }
  spec.pose_noise_deg = 1.0;
  spec.pose_noise_translation = 0.07;
  const ToyScene noisy = generate_toy_scene(spec, 3);
  const ToyScene clean = generate_toy_scene([&] {
    ToySceneSpec s = spec;
    s.pose_noise_deg = 0.0;
    s.pose_noise_translation = 0.0;
    return s;
  }(), 3);
  for (std::size_t k = 0; k < noisy.views.size(); ++k) {
    const auto& v = noisy.views[k];
    EXPECT_EQ(v.image, clean.views[k].image);
    if (v.heldout) {
      EXPECT_EQ(v.label_pose.translation(), v.true_pose.translation());
      continue;
    }
    EXPECT_NEAR(rotation_distance(v.label_pose.rotation(), v.true_pose.rotation()), std::numbers::pi / 180.0, 1e-9);
    EXPECT_NEAR((v.label_pose.translation() - v.true_pose.translation()).norm(), 0.07, 1e-12);
  }
}

TEST(ToyScene, Deterministic) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.width = spec.height = 16;
  spec.train_views = 5;
  spec.light_jitter_deg = 20.0;
  const ToyScene a = generate_toy_scene(spec, 4), b = generate_toy_scene(spec, 4);
  for (std::size_t k = 0; k < a.views.size(); ++k) {
    EXPECT_EQ(a.views[k].image, b.views[k].image);
    EXPECT_EQ(a.views[k].light, b.views[k].light);
  }
}

// ---- manifests --------------------------------------------------------------------

SceneManifest sample_manifest(const fs::path& dir) {
  ToySceneSpec spec = ToySceneSpec::sphere_and_box();
  spec.width = spec.height = 8;
  spec.train_views = 3;
  spec.heldout_views = 1;
  spec.pose_noise_deg = 0.5;
  return write_toy_scene(generate_toy_scene(spec, 5), dir);
}

TEST(Manifest, SaveLoadRoundTrip) {
  TempDir dir("nerfaug_manifest_rt");
  const SceneManifest m = sample_manifest(dir.path);
  const SceneManifest loaded = load_manifest(dir.path / "manifest.jsonl");
  EXPECT_TRUE(loaded == m);
  ASSERT_EQ(loaded.frames.size(), 4u);
  EXPECT_TRUE(loaded.frames[0].true_pose.has_value());
  EXPECT_EQ(loaded.frames[3].split, "heldout");
  EXPECT_EQ(loaded.resolve(loaded.frames[0].image), dir.path / loaded.frames[0].image);

  save_manifest(loaded, dir.path / "copy.jsonl");
  EXPECT_TRUE(load_manifest(dir.path / "copy.jsonl") == m);

  const LoadedFrames train = load_frames(loaded, "train");
  EXPECT_EQ(train.images.size(), 3u);
  EXPECT_EQ(train.masks[0].channels, 1);
}

TEST(Manifest, ErrorsNameTheLine) {
  TempDir dir("nerfaug_manifest_err");
  sample_manifest(dir.path);
  std::ifstream in(dir.path / "manifest.jsonl");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  const auto with_line = [&](int index, const std::string& replacement) {
    std::string text;
    for (std::size_t k = 0; k < lines.size(); ++k) text += (static_cast<int>(k) == index ? replacement : lines[k]) + "\n";
    write_text(dir.path / "bad.jsonl", text);
  };
  const auto expect_error = [&](const std::string& needle) {
    try {
      load_manifest(dir.path / "bad.jsonl", {.check_files = true, .warn = [](const std::string&) {}});
      ADD_FAILURE() << "expected ManifestError containing " << needle;
    } catch (const ManifestError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  with_line(2, R"({"image":"images/0001.png","mask":null,"q":[0,0,0,0],"t":[0,0,4],"split":"train"})");
  expect_error("bad.jsonl:3:");
  with_line(2, "{not json");
  expect_error("bad.jsonl:3:");
  with_line(1, R"({"image":"images/nope.png","mask":null,"q":[1,0,0,0],"t":[0,0,4],"split":"train"})");
  expect_error("bad.jsonl:2:");
  with_line(1, R"({"image":"images/0000.png","mask":null,"q":[1,0,0,0],"t":[0,1e999,4],"split":"train"})");
  expect_error("bad.jsonl:2:");
  EXPECT_THROW(load_manifest(dir.path / "absent.jsonl"), ManifestError);
}

TEST(Manifest, RenormalizesWithWarning) {
  TempDir dir("nerfaug_manifest_norm");
  sample_manifest(dir.path);
  std::ifstream in(dir.path / "manifest.jsonl");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  write_text(dir.path / "m.jsonl",
             header + "\n" + R"({"image":"images/0000.png","mask":null,"q":[2,0,0,0],"t":[0,0,4],"split":"train"})" +
                 "\n" + R"({"image":"images/0000.png","mask":null,"q":[1.0000001,0,0,0],"t":[0,0,4],"split":"train"})" +
                 "\n");
  std::vector<std::string> warnings;
  const SceneManifest m =
      load_manifest(dir.path / "m.jsonl", {.check_files = true, .warn = [&](const std::string& w) { warnings.push_back(w); }});
  EXPECT_EQ(m.frames[0].pose.rotation().w(), 1.0);
  EXPECT_NEAR(m.frames[1].pose.rotation().norm(), 1.0, 1e-15);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find(":2:"), std::string::npos);
}

// ---- checkpoints ----------------------------------------------------------------------

TEST(Checkpoint, RoundTripRendersBitIdentically) {
  TempDir dir("nerfaug_ckpt_rt");
  FieldConfig fc = FieldConfig::compact();
  fc.grid_resolution = 16;
  fc.num_images = 3;
  const FieldParameters p = randomized_parameters(fc, 6);
  save_checkpoint(dir.path / "m.ckpt", p);
  const FieldParameters q = load_checkpoint(dir.path / "m.ckpt");
  EXPECT_EQ(p, q);
  const CameraIntrinsics k{20.0, 20.0, 8.0, 8.0, 16, 16};
  const Pose pose = look_at(Vec3(0, -3, 1), Vec3::Zero());
  RenderConfig rc;
  rc.samples_per_ray = 16;
  const auto a = render_image(p, pose, k, p.embedding(1), rc);
  const auto b = render_image(q, pose, k, q.embedding(1), rc);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.opacity, b.opacity);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir dir("nerfaug_ckpt_bad");
  FieldConfig fc = FieldConfig::compact();
  fc.grid_resolution = 8;
  fc.num_images = 2;
  save_checkpoint(dir.path / "m.ckpt", FieldParameters::initialize(fc, 1));
  std::string bytes;
  {
    std::ifstream in(dir.path / "m.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  write_text(dir.path / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir.path / "short.ckpt"), std::runtime_error);
  std::string tampered = bytes;
  const auto pos = tampered.find("\"grid_resolution\":8");
  ASSERT_NE(pos, std::string::npos);
  tampered[pos + 18] = '9';
  write_text(dir.path / "tampered.ckpt", tampered);
  EXPECT_THROW(load_checkpoint(dir.path / "tampered.ckpt"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir.path / "absent.ckpt"), std::runtime_error);
}

TEST(FieldConfig, JsonRoundTripAndHash) {
  FieldConfig fc = FieldConfig::compact();
  fc.num_images = 7;
  fc.bounds = Aabb{Vec3(-1, -2, -3), Vec3(1, 2, 3)};
  EXPECT_EQ(FieldConfig::from_json(fc.to_json()), fc);
  FieldConfig other = fc;
  other.sh_degree = 1;
  EXPECT_NE(fc.hash(), other.hash());
}

}  // namespace
}  // namespace nerfaug
