// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/augment.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace nerfaug {

using nlohmann::json;

std::string to_string(EmbeddingStrategy strategy) {
  switch (strategy) {
    case EmbeddingStrategy::kUniform:
      return "uniform";
    case EmbeddingStrategy::kInterpolate:
      return "interpolate";
    case EmbeddingStrategy::kExtrapolate:
      return "extrapolate";
    case EmbeddingStrategy::kGaussian:
      return "gaussian";
  }
  return "unknown";
}

EmbeddingStrategy parse_embedding_strategy(const std::string& text) {
  for (int k = 0; k < kEmbeddingStrategyCount; ++k) {
    const auto s = static_cast<EmbeddingStrategy>(k);
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown embedding strategy '" + text + "'");
}

EmbeddingDistribution EmbeddingDistribution::fit(std::vector<Eigen::VectorXd> embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("fit_embedding_distribution: no embeddings");
  const Eigen::Index d = embeddings.front().size();
  for (const auto& e : embeddings)
    if (e.size() != d) throw std::invalid_argument("fit_embedding_distribution: inconsistent dimensions");
  EmbeddingDistribution dist;
  const double n = static_cast<double>(embeddings.size());
  dist.mean = Eigen::VectorXd::Zero(d);
  for (const auto& e : embeddings) dist.mean += e;
  dist.mean /= n;
  dist.covariance = Eigen::MatrixXd::Zero(d, d);
  for (const auto& e : embeddings) {
    const Eigen::VectorXd c = e - dist.mean;
    dist.covariance.noalias() += c * c.transpose();
  }
  dist.covariance /= n;
  dist.covariance = 0.5 * (dist.covariance + dist.covariance.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dist.covariance);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  dist.factor = eig.eigenvectors() * root.asDiagonal();
  dist.embeddings = std::move(embeddings);
  return dist;
}

EmbeddingDistribution EmbeddingDistribution::from_params(const FieldParameters& params) {
  std::vector<Eigen::VectorXd> list;
  for (int i = 0; i < params.config().num_images; ++i) {
    const auto e = params.embedding(i);
    list.emplace_back(Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size())));
  }
  return fit(std::move(list));
}

Eigen::VectorXd EmbeddingDistribution::sample(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(dim());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  return mean + factor * z;
}

Eigen::VectorXd interpolate_embeddings(const Eigen::VectorXd& ei, const Eigen::VectorXd& ej, double alpha) {
  if (ei.size() != ej.size()) throw std::invalid_argument("interpolate_embeddings: dimension mismatch");
  if (alpha == 0.0) return ei;
  if (alpha == 1.0) return ej;
  return ei + alpha * (ej - ei);
}

EmbeddingDraw sample_embedding(const EmbeddingDistribution& dist, EmbeddingStrategy strategy, Rng& rng,
                               std::optional<double> forced_alpha, const ExtrapolationRange& range) {
  const int n = static_cast<int>(dist.embeddings.size());
  EmbeddingDraw draw;
  draw.strategy = strategy;
  if (strategy == EmbeddingStrategy::kGaussian) {
    draw.embedding = dist.sample(rng);
    return draw;
  }
  if (n < 1) throw std::invalid_argument("sample_embedding: no embeddings");
  if (strategy == EmbeddingStrategy::kUniform) {
    draw.i = std::uniform_int_distribution<int>(0, n - 1)(rng);
    draw.embedding = dist.embeddings[draw.i];
    return draw;
  }
  if (n < 2) throw std::invalid_argument("sample_embedding: pairwise strategies need at least two embeddings");
  draw.i = std::uniform_int_distribution<int>(0, n - 1)(rng);
  draw.j = std::uniform_int_distribution<int>(0, n - 2)(rng);
  if (draw.j >= draw.i) ++draw.j;
  double alpha = 0.0;
  if (forced_alpha) {
    alpha = *forced_alpha;
  } else if (strategy == EmbeddingStrategy::kInterpolate) {
    alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  } else {
    const double total = range.below + range.above;
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    alpha = u < range.below ? -range.below + u : 1.0 + (u - range.below);
  }
  draw.alpha = alpha;
  draw.embedding = interpolate_embeddings(dist.embeddings[draw.i], dist.embeddings[draw.j], alpha);
  return draw;
}

EmbeddingStrategy choose_strategy(const std::array<double, kEmbeddingStrategyCount>& weights, Rng& rng) {
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return static_cast<EmbeddingStrategy>(pick(rng));
}

std::vector<double> perturb_color_network(const FieldParameters& params, double scale, Rng& rng) {
  if (!(scale >= 0.0)) throw std::invalid_argument("perturb_color_network: scale must be >= 0");
  const auto src = params.group(ParamGroup::kColorMlp);
  std::vector<double> out(src.begin(), src.end());
  if (scale == 0.0) return out;
  const MlpShape shape = params.config().color_shape();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < shape.layer_count(); ++l) {
    const std::size_t w0 = shape.weight_offset(l);
    const std::size_t nw = shape.weight_count(l);
    double mean = 0.0;
    for (std::size_t k = 0; k < nw; ++k) mean += src[w0 + k];
    mean /= static_cast<double>(nw);
    double var = 0.0;
    for (std::size_t k = 0; k < nw; ++k) var += (src[w0 + k] - mean) * (src[w0 + k] - mean);
    const double sigma = scale * std::sqrt(var / static_cast<double>(nw));
    const std::size_t end = shape.bias_offset(l) + static_cast<std::size_t>(shape.widths[l + 1]);
    for (std::size_t k = w0; k < end; ++k) out[k] += sigma * normal(rng);
  }
  return out;
}

Image composite_background(const Image& foreground, const Image& opacity, const Image& background) {
  if (!foreground.same_size(opacity) || !foreground.same_size(background))
    throw std::invalid_argument("composite_background: resolution mismatch");
  if (opacity.channels != 1) throw std::invalid_argument("composite_background: opacity must have one channel");
  const Image bg = foreground.channels == 1 ? to_gray(background) : to_rgb(background);
  if (foreground.channels != 1 && foreground.channels != 3)
    throw std::invalid_argument("composite_background: foreground must be gray or RGB");
  Image out = foreground;
  const int ch = foreground.channels;
  for (std::size_t p = 0; p < foreground.pixel_count(); ++p) {
    const double t = 1.0 - opacity.data[p];
    for (int c = 0; c < ch; ++c) out.data[p * ch + c] += t * bg.data[p * ch + c];
  }
  return out;
}

Pose sample_pose(const CameraIntrinsics& intrinsics, const Vec3& center, double min_distance, double max_distance,
                 double border, Rng& rng) {
  if (!(min_distance > 0.0 && max_distance >= min_distance))
    throw std::invalid_argument("sample_pose: invalid distance range");
  if (!(border >= 0.0 && border < 0.5)) throw std::invalid_argument("sample_pose: border must be in [0, 0.5)");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u1 = u01(rng), u2 = u01(rng), u3 = u01(rng);
  const double two_pi = 2.0 * std::numbers::pi;
  const Quat q(std::sqrt(1.0 - u1) * std::sin(two_pi * u2), std::sqrt(1.0 - u1) * std::cos(two_pi * u2),
               std::sqrt(u1) * std::sin(two_pi * u3), std::sqrt(u1) * std::cos(two_pi * u3));

  const double i = intrinsics.width * (border + (1.0 - 2.0 * border) * u01(rng)) - 0.5;
  const double j = intrinsics.height * (border + (1.0 - 2.0 * border) * u01(rng)) - 0.5;
  const double a3 = std::pow(min_distance, 3.0);
  const double b3 = std::pow(max_distance, 3.0);
  const double dist = std::cbrt(a3 + (b3 - a3) * u01(rng));
  const Vec3 p_cam = dist * pinhole_direction(intrinsics, i, j).normalized();
  const Pose pose(q, Vec3::Zero());
  return Pose(pose.rotation(), center - pose.rotation() * p_cam);
}

void AugmentConfig::validate() const {
  if (n_labels < 1) throw std::invalid_argument("augment: n_labels must be >= 1");
  if (illumination_configs < 0 || color_configs < 0 || configs_per_pose() < 1)
    throw std::invalid_argument("augment: need at least one configuration per pose");
  double total = 0.0;
  for (double w : strategy_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("augment: strategy weights must be non-negative");
    total += w;
  }
  if (illumination_configs > 0 && std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("augment: strategy weights must sum to 1");
  if (!(extrapolation.below >= 0.0 && extrapolation.above >= 0.0 && extrapolation.below + extrapolation.above > 0.0))
    throw std::invalid_argument("augment: extrapolation range must be non-negative and non-empty");
  if (color_configs > 0 && color_noise_scales.empty())
    throw std::invalid_argument("augment: color configurations need at least one noise scale");
  for (double s : color_noise_scales)
    if (!(s >= 0.0)) throw std::invalid_argument("augment: noise scales must be >= 0");
  if (!(background_probability >= 0.0 && background_probability <= 1.0))
    throw std::invalid_argument("augment: background probability must be in [0, 1]");
  if (width < 1 || height < 1 || samples_per_ray < 1 || chunk_rays < 1)
    throw std::invalid_argument("augment: sizes must be positive");
  if (!(mask_threshold > 0.0 && mask_threshold <= 1.0))
    throw std::invalid_argument("augment: mask threshold must be in (0, 1]");
}

CameraIntrinsics rescale_intrinsics(const CameraIntrinsics& k, int width, int height) {
  const double sx = static_cast<double>(width) / k.width;
  const double sy = static_cast<double>(height) / k.height;
  return {k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, width, height};
}

namespace {

constexpr const char* kAugmentFormat = "nerfaug-augmented";

json pose_q(const Pose& p) {
  const Quat& q = p.rotation();
  return json::array({q.w(), q.x(), q.y(), q.z()});
}

json pose_t(const Pose& p) {
  const Vec3& t = p.translation();
  return json::array({t.x(), t.y(), t.z()});
}

json sample_record(const GeneratedSample& s) {
  json r;
  r["pose_index"] = s.pose_index;
  r["config_index"] = s.config_index;
  r["image"] = s.image.generic_string();
  r["mask"] = s.mask.generic_string();
  r["q"] = pose_q(s.pose);
  r["t"] = pose_t(s.pose);
  r["kind"] = s.kind;
  r["strategy"] = s.kind == "illumination" ? json(to_string(s.draw.strategy)) : json(nullptr);
  r["alpha"] = s.draw.alpha ? json(*s.draw.alpha) : json(nullptr);
  r["i"] = s.draw.i >= 0 ? json(s.draw.i) : json(nullptr);
  r["j"] = s.draw.j >= 0 ? json(s.draw.j) : json(nullptr);
  r["noise_scale"] = s.noise_scale ? json(*s.noise_scale) : json(nullptr);
  r["noise_seed"] = s.noise_seed ? json(*s.noise_seed) : json(nullptr);
  r["background"] = s.background;
  r["background_source"] = s.background_source.empty() ? json(nullptr) : json(s.background_source);
  r["seed"] = s.seed;
  if (!s.error.empty()) r["error"] = s.error;
  return r;
}

std::string numbered(const char* prefix, int pose, int config) {
  char name[64];
  if (config < 0) {
    std::snprintf(name, sizeof(name), "%s_%05d.png", prefix, pose);
  } else {
    std::snprintf(name, sizeof(name), "%s_%05d_%03d.png", prefix, pose, config);
  }
  return name;
}

}  // namespace

AugmentResult generate_augmented_set(const FieldParameters& appearance, const FieldParameters& geometry,
                                     const CameraIntrinsics& intrinsics, std::span<const Pose> training_labels,
                                     std::span<const Pose> labels, const AugmentConfig& config,
                                     const std::filesystem::path& out_dir) {
  config.validate();
  const FieldConfig& fa = appearance.config();
  const FieldConfig& fg = geometry.config();
  if (fa.bounds != fg.bounds) throw std::invalid_argument("augment: the two models cover different scene boxes");
  if (fa.num_images < 1) throw std::invalid_argument("augment: the appearance model has no embeddings");

  const CameraIntrinsics out_k = rescale_intrinsics(intrinsics, config.width, config.height);
  const Vec3 center = fa.bounds.center();

  std::vector<Pose> poses(labels.begin(), labels.end());
  if (poses.empty()) {
    double lo = config.pose_sampler.min_distance;
    double hi = config.pose_sampler.max_distance;
    if (!(lo > 0.0) || !(hi > 0.0)) {
      if (training_labels.empty()) throw std::invalid_argument("augment: distance range needs training labels");
      double mean = 0.0;
      for (const auto& p : training_labels) mean += (p.translation() - center).norm();
      mean /= static_cast<double>(training_labels.size());
      if (!(lo > 0.0)) lo = 0.8 * mean;
      if (!(hi > 0.0)) hi = 1.25 * mean;
    }
    Rng pose_rng(mix_seed(config.seed, 0x706f7365ULL));
    for (int k = 0; k < config.n_labels; ++k)
      poses.push_back(sample_pose(out_k, center, lo, hi, config.pose_sampler.border, pose_rng));
  }
  const int n_poses = static_cast<int>(poses.size());
  const int n_cfg = config.configs_per_pose();

  std::vector<Image> backgrounds;
  for (const auto& path : config.backgrounds) {
    Image bg = resize_area(read_png(path), config.width, config.height);
    backgrounds.push_back(config.grayscale ? to_gray(bg) : to_rgb(bg));
  }

  const EmbeddingDistribution dist = EmbeddingDistribution::from_params(appearance);
  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "masks");

  RenderConfig rc;
  rc.samples_per_ray = config.samples_per_ray;
  rc.mask_threshold = config.mask_threshold;
  rc.chunk_rays = config.chunk_rays;

  AugmentResult result;
  result.samples.resize(static_cast<std::size_t>(n_poses) * n_cfg);
  result.masks.resize(n_poses);

#pragma omp parallel for schedule(dynamic)
  for (int p = 0; p < n_poses; ++p) {
    const std::uint64_t pose_seed = mix_seed(config.seed, 0x617567ULL, static_cast<std::uint64_t>(p));
    Rng rng(pose_seed);
    const std::filesystem::path mask_rel = std::filesystem::path("masks") / numbered("mask", p, -1);
    result.masks[p] = mask_rel;
    std::string mask_error;
    try {
      write_png(out_dir / mask_rel, render_mask(geometry, poses[p], out_k, rc));
    } catch (const std::exception& e) {
      mask_error = std::string("mask: ") + e.what();
    }

    std::vector<Coloring> colorings(n_cfg);
    for (int k = 0; k < n_cfg; ++k) {
      GeneratedSample& s = result.samples[static_cast<std::size_t>(p) * n_cfg + k];
      s.pose_index = p;
      s.config_index = k;
      s.pose = poses[p];
      s.mask = mask_rel;
      s.image = std::filesystem::path("images") / numbered("image", p, k);
      s.seed = pose_seed;
      if (k < config.illumination_configs) {
        s.kind = "illumination";
        s.draw = sample_embedding(dist, choose_strategy(config.strategy_weights, rng), rng, std::nullopt,
                                  config.extrapolation);
      } else {
        s.kind = "color";
        s.draw = sample_embedding(dist, EmbeddingStrategy::kUniform, rng);
        const int c = k - config.illumination_configs;
        s.noise_scale = config.color_noise_scales[c % config.color_noise_scales.size()];
        s.noise_seed = mix_seed(pose_seed, 0x6e6f697365ULL, static_cast<std::uint64_t>(k));
        Rng noise_rng(*s.noise_seed);
        colorings[k].color_params = perturb_color_network(appearance, *s.noise_scale, noise_rng);
      }
      colorings[k].embedding.assign(s.draw.embedding.data(), s.draw.embedding.data() + s.draw.embedding.size());
      if (!backgrounds.empty() && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.background_probability) {
        const int b = std::uniform_int_distribution<int>(0, static_cast<int>(backgrounds.size()) - 1)(rng);
        s.background = true;
        s.background_index = b;
        s.background_source = config.backgrounds[b].filename().string();
      }
    }

    const AppearanceRenders renders = render_appearances(appearance, poses[p], out_k, colorings, rc);
    for (int k = 0; k < n_cfg; ++k) {
      GeneratedSample& s = result.samples[static_cast<std::size_t>(p) * n_cfg + k];
      if (!mask_error.empty()) {
        s.error = mask_error;
        continue;
      }
      try {
        Image img = config.grayscale ? to_gray(renders.colors[k]) : renders.colors[k];
        if (s.background) {
          img = composite_background(img, renders.opacity, backgrounds[s.background_index]);
        }
        write_png(out_dir / s.image, img);
      } catch (const std::exception& e) {
        s.error = e.what();
      }
    }
  }

  result.manifest = out_dir / "manifest.jsonl";
  std::ofstream out(result.manifest, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create augmented manifest " + result.manifest.string());
  json header;
  header["format"] = kAugmentFormat;
  header["version"] = 1;
  header["width"] = config.width;
  header["height"] = config.height;
  header["intrinsics"] = {{"fx", out_k.fx}, {"fy", out_k.fy}, {"cx", out_k.cx}, {"cy", out_k.cy}};
  header["n_labels"] = n_poses;
  header["n_cfg"] = n_cfg;
  header["illumination_configs"] = config.illumination_configs;
  header["color_configs"] = config.color_configs;
  header["mask_threshold"] = config.mask_threshold;
  header["seed"] = config.seed;
  out << header.dump() << "\n";
  for (const auto& s : result.samples) {
    if (!s.error.empty()) ++result.error_count;
    out << sample_record(s).dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed writing augmented manifest " + result.manifest.string());
  return result;
}

std::vector<Pose> load_pose_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pose label file " + path.string());
  std::vector<Pose> poses;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    json r;
    try {
      r = json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + "malformed record: " + e.what());
    }
    if (!r.is_object()) throw std::runtime_error(where + "record must be a JSON object");
    if (r.contains("format")) continue;
    if (!r.contains("q") || !r.contains("t") || !r["q"].is_array() || !r["t"].is_array() || r["q"].size() != 4 ||
        r["t"].size() != 3)
      throw std::runtime_error(where + "expected 'q' (4 numbers) and 't' (3 numbers)");
    double v[7];
    for (int k = 0; k < 7; ++k) {
      const json& x = k < 4 ? r["q"][k] : r["t"][k - 4];
      if (!x.is_number() || !std::isfinite(x.get<double>())) throw std::runtime_error(where + "non-finite pose value");
      v[k] = x.get<double>();
    }
    try {
      poses.push_back(Pose::from_wxyz(v[0], v[1], v[2], v[3], Vec3(v[4], v[5], v[6])));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  return poses;
}

}  // namespace nerfaug
