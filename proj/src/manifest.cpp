// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/manifest.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace nerfaug {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "nerfaug-scene";

bool same_pose(const Pose& a, const Pose& b) {
  return a.rotation().coeffs() == b.rotation().coeffs() && a.translation() == b.translation();
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json quat_json(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

class RecordReader {
 public:
  RecordReader(const std::filesystem::path& path, int line, const json& record)
      : path_(path), line_(line), record_(record) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ManifestError(path_.string() + ":" + std::to_string(line_) + ": " + what);
  }

  const json& field(const char* key) const {
    if (!record_.contains(key)) fail(std::string("missing field '") + key + "'");
    return record_.at(key);
  }

  double number(const json& j, const std::string& what) const {
    if (!j.is_number()) fail(what + " must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(what + " is not finite");
    return v;
  }

  std::vector<double> numbers(const char* key, std::size_t count) const {
    const json& j = field(key);
    if (!j.is_array() || j.size() != count)
      fail(std::string("'") + key + "' must be an array of " + std::to_string(count) + " numbers");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(number(v, std::string("'") + key + "' entry"));
    return out;
  }

  Vec3 vec3(const char* key) const {
    const auto v = numbers(key, 3);
    return {v[0], v[1], v[2]};
  }

  std::string string(const char* key) const {
    const json& j = field(key);
    if (!j.is_string()) fail(std::string("'") + key + "' must be a string");
    return j.get<std::string>();
  }

  Pose pose(const char* q_key, const char* t_key, const WarningSink& warn) const {
    const auto q = numbers(q_key, 4);
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!(norm > 0.0)) fail(std::string("quaternion '") + q_key + "' has zero norm");
    if (std::abs(norm - 1.0) > 1e-3)
      warn(path_.string() + ":" + std::to_string(line_) + ": quaternion '" + q_key + "' renormalized (norm " +
           std::to_string(norm) + ")");
    return Pose::from_wxyz(q[0], q[1], q[2], q[3], vec3(t_key));
  }

 private:
  const std::filesystem::path& path_;
  int line_;
  const json& record_;
};

}  // namespace

bool ManifestFrame::operator==(const ManifestFrame& rhs) const {
  if (image != rhs.image || mask != rhs.mask || split != rhs.split || !same_pose(pose, rhs.pose)) return false;
  if (true_pose.has_value() != rhs.true_pose.has_value()) return false;
  return !true_pose || same_pose(*true_pose, *rhs.true_pose);
}

std::filesystem::path SceneManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

bool SceneManifest::operator==(const SceneManifest& rhs) const {
  return intrinsics == rhs.intrinsics && bounds == rhs.bounds && units == rhs.units && frames == rhs.frames;
}

SceneManifest load_manifest(const std::filesystem::path& path, const ManifestLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  const WarningSink warn = options.warn ? options.warn : [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };

  SceneManifest m;
  m.base_dir = path.parent_path();
  std::string text;
  int line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(text);
    } catch (const json::exception& e) {
      throw ManifestError(path.string() + ":" + std::to_string(line) + ": malformed record: " + e.what());
    }
    const RecordReader r(path, line, record);
    if (!record.is_object()) r.fail("record must be a JSON object");

    if (!have_header) {
      if (r.string("format") != kFormatTag) r.fail("not a nerfaug scene manifest");
      const json& version = r.field("version");
      if (!version.is_number_integer() || version.get<int>() != kManifestVersion)
        r.fail("unsupported manifest version");
      const json& k = r.field("intrinsics");
      if (!k.is_object()) r.fail("'intrinsics' must be an object");
      const RecordReader kr(path, line, k);
      m.intrinsics.fx = kr.number(kr.field("fx"), "fx");
      m.intrinsics.fy = kr.number(kr.field("fy"), "fy");
      m.intrinsics.cx = kr.number(kr.field("cx"), "cx");
      m.intrinsics.cy = kr.number(kr.field("cy"), "cy");
      const json& w = kr.field("width");
      const json& h = kr.field("height");
      if (!w.is_number_integer() || !h.is_number_integer()) r.fail("image size must be integers");
      m.intrinsics.width = w.get<int>();
      m.intrinsics.height = h.get<int>();
      try {
        m.intrinsics.validate();
      } catch (const std::invalid_argument& e) {
        r.fail(e.what());
      }
      const json& b = r.field("bounds");
      if (!b.is_object()) r.fail("'bounds' must be an object");
      const RecordReader br(path, line, b);
      m.bounds = {br.vec3("min"), br.vec3("max")};
      if (!(m.bounds.max.array() > m.bounds.min.array()).all()) r.fail("bounds max must exceed min");
      if (record.contains("units")) m.units = r.string("units");
      have_header = true;
      continue;
    }

    ManifestFrame f;
    f.image = r.string("image");
    if (record.contains("mask") && !record.at("mask").is_null()) f.mask = std::filesystem::path(r.string("mask"));
    f.pose = r.pose("q", "t", warn);
    if (record.contains("split")) f.split = r.string("split");
    if (f.split != "train" && f.split != "heldout") r.fail("split must be 'train' or 'heldout'");
    if (record.contains("true_q")) f.true_pose = r.pose("true_q", "true_t", warn);
    if (options.check_files) {
      if (!std::filesystem::exists(m.resolve(f.image))) r.fail("image file not found: " + m.resolve(f.image).string());
      if (f.mask && !std::filesystem::exists(m.resolve(*f.mask)))
        r.fail("mask file not found: " + m.resolve(*f.mask).string());
    }
    m.frames.push_back(std::move(f));
  }
  if (!have_header) throw ManifestError(path.string() + ": empty manifest");
  return m;
}

void save_manifest(const SceneManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create manifest " + path.string());
  json header;
  header["format"] = kFormatTag;
  header["version"] = kManifestVersion;
  header["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy}, {"cx", m.intrinsics.cx},
                          {"cy", m.intrinsics.cy}, {"width", m.intrinsics.width}, {"height", m.intrinsics.height}};
  header["bounds"] = {{"min", vec3_json(m.bounds.min)}, {"max", vec3_json(m.bounds.max)}};
  header["units"] = m.units;
  out << header.dump() << "\n";
  for (const auto& f : m.frames) {
    json r;
    r["image"] = f.image.generic_string();
    r["mask"] = f.mask ? json(f.mask->generic_string()) : json(nullptr);
    r["q"] = quat_json(f.pose.rotation());
    r["t"] = vec3_json(f.pose.translation());
    r["split"] = f.split;
    if (f.true_pose) {
      r["true_q"] = quat_json(f.true_pose->rotation());
      r["true_t"] = vec3_json(f.true_pose->translation());
    }
    out << r.dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

SceneManifest write_toy_scene(const ToyScene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  SceneManifest m;
  m.intrinsics = scene.intrinsics;
  m.bounds = scene.spec.bounds;
  m.base_dir = dir;
  for (std::size_t k = 0; k < scene.views.size(); ++k) {
    const ToyView& v = scene.views[k];
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", k);
    ManifestFrame f;
    f.image = std::filesystem::path("images") / name;
    f.mask = std::filesystem::path("masks") / name;
    f.pose = v.label_pose;
    f.true_pose = v.true_pose;
    f.split = v.heldout ? "heldout" : "train";
    write_png(dir / f.image, v.image);
    write_png(dir / *f.mask, v.mask);
    m.frames.push_back(std::move(f));
  }
  save_manifest(m, dir / "manifest.jsonl");
  return m;
}

LoadedFrames load_frames(const SceneManifest& manifest, const std::string& split) {
  LoadedFrames out;
  for (std::size_t k = 0; k < manifest.frames.size(); ++k) {
    const ManifestFrame& f = manifest.frames[k];
    if (f.split != split) continue;
    Image img = read_png(manifest.resolve(f.image));
    if (img.width != manifest.intrinsics.width || img.height != manifest.intrinsics.height)
      throw std::runtime_error("image " + manifest.resolve(f.image).string() + " does not match the manifest size");
    Image mask = f.mask ? to_gray(read_png(manifest.resolve(*f.mask))) : Image(img.width, img.height, 1, 1.0);
    if (!mask.same_size(img))
      throw std::runtime_error("mask " + manifest.resolve(*f.mask).string() + " does not match its image size");
    out.images.push_back(std::move(img));
    out.masks.push_back(std::move(mask));
    out.poses.push_back(f.pose);
    out.frame_index.push_back(k);
  }
  return out;
}

}  // namespace nerfaug
