// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/training.hpp"

#include "binary_io.hpp"
#include "nerfaug/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace nerfaug {

CorrectionContext RayDataset::correction_context() const {
  CorrectionContext ctx;
  ctx.label_rotation.reserve(label_poses.size());
  for (const auto& p : label_poses) ctx.label_rotation.push_back(p.rotation_matrix());
  return ctx;
}

namespace {
constexpr char kDatasetMagic[9] = "NAUGRAYS";
constexpr std::uint32_t kDatasetVersion = 1;

void write_vec3(std::ostream& out, const Vec3& v) { detail::write_doubles(out, std::span<const double>(v.data(), 3)); }
Vec3 read_vec3(std::istream& in) {
  Vec3 v;
  detail::read_doubles(in, std::span<double>(v.data(), 3));
  return v;
}
}  // namespace

void RayDataset::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create ray dataset " + path.string());
  out.write(kDatasetMagic, 8);
  detail::write_pod(out, kDatasetVersion);
  for (double v : {intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy}) detail::write_pod(out, v);
  detail::write_pod<std::int32_t>(out, intrinsics.width);
  detail::write_pod<std::int32_t>(out, intrinsics.height);
  write_vec3(out, bounds.min);
  write_vec3(out, bounds.max);
  detail::write_pod(out, near);
  detail::write_pod(out, far);
  detail::write_pod<std::uint64_t>(out, label_poses.size());
  for (const auto& p : label_poses) {
    const Quat& q = p.rotation();
    for (double v : {q.w(), q.x(), q.y(), q.z()}) detail::write_pod(out, v);
    write_vec3(out, p.translation());
  }
  detail::write_pod<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    write_vec3(out, e.origin);
    write_vec3(out, e.direction);
    write_vec3(out, e.pixel);
    detail::write_pod(out, e.mask);
    detail::write_pod<std::int32_t>(out, e.image);
    detail::write_pod(out, e.near);
    detail::write_pod(out, e.far);
  }
  if (!out) throw std::runtime_error("failed writing ray dataset " + path.string());
}

RayDataset RayDataset::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open ray dataset " + path.string());
  detail::expect_magic(in, kDatasetMagic, "ray dataset " + path.string());
  if (detail::read_pod<std::uint32_t>(in) != kDatasetVersion)
    throw std::runtime_error("ray dataset " + path.string() + ": unsupported version");
  RayDataset d;
  d.intrinsics.fx = detail::read_pod<double>(in);
  d.intrinsics.fy = detail::read_pod<double>(in);
  d.intrinsics.cx = detail::read_pod<double>(in);
  d.intrinsics.cy = detail::read_pod<double>(in);
  d.intrinsics.width = detail::read_pod<std::int32_t>(in);
  d.intrinsics.height = detail::read_pod<std::int32_t>(in);
  d.bounds.min = read_vec3(in);
  d.bounds.max = read_vec3(in);
  d.near = detail::read_pod<double>(in);
  d.far = detail::read_pod<double>(in);
  const auto n_poses = detail::read_pod<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < n_poses; ++k) {
    double q[4];
    for (double& v : q) v = detail::read_pod<double>(in);
    d.label_poses.push_back(Pose::from_wxyz(q[0], q[1], q[2], q[3], read_vec3(in)));
  }
  const auto n_entries = detail::read_pod<std::uint64_t>(in);
  d.entries.resize(n_entries);
  for (auto& e : d.entries) {
    e.origin = read_vec3(in);
    e.direction = read_vec3(in);
    e.pixel = read_vec3(in);
    e.mask = detail::read_pod<double>(in);
    e.image = detail::read_pod<std::int32_t>(in);
    e.near = detail::read_pod<double>(in);
    e.far = detail::read_pod<double>(in);
    if (e.image < 0 || e.image >= static_cast<int>(n_poses))
      throw std::runtime_error("ray dataset " + path.string() + ": entry references a missing image");
  }
  return d;
}

bool RayDataset::operator==(const RayDataset& rhs) const {
  if (!(intrinsics == rhs.intrinsics && bounds == rhs.bounds && near == rhs.near && far == rhs.far)) return false;
  if (label_poses.size() != rhs.label_poses.size() || entries.size() != rhs.entries.size()) return false;
  for (std::size_t k = 0; k < label_poses.size(); ++k) {
    if (label_poses[k].rotation().coeffs() != rhs.label_poses[k].rotation().coeffs() ||
        label_poses[k].translation() != rhs.label_poses[k].translation())
      return false;
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& a = entries[k];
    const auto& b = rhs.entries[k];
    if (a.origin != b.origin || a.direction != b.direction || a.pixel != b.pixel || a.mask != b.mask ||
        a.image != b.image || a.near != b.near || a.far != b.far)
      return false;
  }
  return true;
}

RayDataset preprocess(std::span<const Image> images, std::span<const Pose> poses, std::span<const Image> masks,
                      const CameraIntrinsics& intrinsics, const Aabb& bounds, double near, double far) {
  if (images.size() != poses.size() || images.size() != masks.size())
    throw std::invalid_argument("preprocess: images, poses and masks must have equal counts");
  intrinsics.validate();
  RayDataset d;
  d.intrinsics = intrinsics;
  d.bounds = bounds;
  d.label_poses.assign(poses.begin(), poses.end());

  double auto_near = std::numeric_limits<double>::infinity();
  double auto_far = 0.0;
  for (const auto& p : poses) {
    const auto [n, f] = default_near_far(p, bounds);
    auto_near = std::min(auto_near, n);
    auto_far = std::max(auto_far, f);
  }
  d.near = near > 0.0 ? near : auto_near;
  d.far = far > 0.0 ? far : auto_far;
  if (!images.empty() && !(d.far > d.near)) throw std::invalid_argument("preprocess: far must exceed near");

  d.entries.reserve(images.size() * intrinsics.width * intrinsics.height);
  for (std::size_t a = 0; a < images.size(); ++a) {
    const Image& img = images[a];
    const Image& mask = masks[a];
    if (img.width != intrinsics.width || img.height != intrinsics.height || !img.same_size(mask))
      throw std::invalid_argument("preprocess: image " + std::to_string(a) + " does not match the intrinsics size");
    const Image rgb = to_rgb(img);
    const Image m = to_gray(mask);
    const auto rays = cast_all_rays(poses[a], intrinsics);
    for (std::size_t p = 0; p < rays.size(); ++p) {
      RayDatasetEntry e;
      e.origin = rays[p].origin;
      e.direction = rays[p].direction;
      e.mask = m.data[p] >= 0.5 ? 1.0 : 0.0;
      e.pixel = Vec3(rgb.data[3 * p], rgb.data[3 * p + 1], rgb.data[3 * p + 2]) * e.mask;
      e.image = static_cast<int>(a);
      const RayQuery q = make_query(rays[p], d.near, d.far, bounds, e.image);
      e.near = q.near;
      e.far = q.far;
      d.entries.push_back(e);
    }
  }
  return d;
}

double photometric_loss(std::span<const Vec3> predicted, std::span<const Vec3> observed) {
  if (predicted.empty()) throw std::invalid_argument("photometric_loss: empty batch");
  if (predicted.size() != observed.size()) throw std::invalid_argument("photometric_loss: batch size mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) acc += (predicted[k] - observed[k]).squaredNorm();
  return acc / (3.0 * static_cast<double>(predicted.size()));
}

double density_loss(std::span<const double> sigma, double mask) {
  double acc = 0.0;
  for (double s : sigma) acc += s * s;
  return acc * (1.0 - mask);
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "appearance") return TrainMode::kAppearance;
  if (text == "geometry") return TrainMode::kGeometry;
  throw std::invalid_argument("unknown training mode '" + text + "' (expected appearance or geometry)");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::kAppearance ? "appearance" : "geometry"; }

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.batch_rays = 1024;
  c.iterations = 3000;
  c.samples_per_ray = 48;
  return c;
}

void TrainConfig::validate() const {
  if (batch_rays < 1 || iterations < 0 || samples_per_ray < 1 || chunk_rays < 1)
    throw std::invalid_argument("train config: counts must be positive");
  for (double lr : {lr_grid, lr_mlp, lr_embedding, lr_pose})
    if (!(lr > 0.0)) throw std::invalid_argument("train config: learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: Adam betas must be in [0, 1)");
  if (max_nonfinite_batches < 1) throw std::invalid_argument("train config: max_nonfinite_batches must be positive");
}

BatchEvaluator::BatchEvaluator(const RayDataset& dataset, int samples_per_ray, int chunk_rays)
    : dataset_(dataset),
      corrections_(dataset.correction_context()),
      samples_per_ray_(samples_per_ray),
      chunk_rays_(chunk_rays) {}

BatchLoss BatchEvaluator::evaluate(const FieldParameters& params, std::span<const std::size_t> indices, TrainMode mode,
                                   double photo_weight, double density_weight,
                                   std::optional<std::uint64_t> jitter_seed, std::span<double> gradient) {
  if (indices.empty()) throw std::invalid_argument("BatchEvaluator: empty batch");
  if (params.config().num_images != dataset_.num_images())
    throw std::invalid_argument("BatchEvaluator: parameter image count does not match the dataset");
  const bool want_grad = !gradient.empty();
  if (want_grad && gradient.size() != params.flat().size())
    throw std::invalid_argument("BatchEvaluator: gradient buffer has the wrong size");

  const std::size_t n = indices.size();
  const int n_chunks = static_cast<int>((n + chunk_rays_ - 1) / chunk_rays_);
  const double inv_b = 1.0 / static_cast<double>(n);
  const bool geometry = mode == TrainMode::kGeometry;
  if (want_grad) {
    if (chunk_grads_.size() < static_cast<std::size_t>(n_chunks)) chunk_grads_.resize(n_chunks);
    for (int c = 0; c < n_chunks; ++c) chunk_grads_[c].assign(params.flat().size(), 0.0);
  }
  std::vector<double> photo_sums(n_chunks, 0.0), density_sums(n_chunks, 0.0);

#pragma omp parallel for schedule(dynamic)
  for (int ci = 0; ci < n_chunks; ++ci) {
    const std::size_t begin = static_cast<std::size_t>(ci) * chunk_rays_;
    const std::size_t end = std::min(n, begin + chunk_rays_);
    std::vector<RayQuery> queries;
    std::vector<std::uint64_t> ids;
    queries.reserve(end - begin);
    ids.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
      const auto& e = dataset_.entries[indices[k]];
      queries.push_back({{e.origin, e.direction}, e.near, e.far, e.image});
      ids.push_back(indices[k]);
    }
    RayChunkKernel kernel(params, samples_per_ray_);
    kernel.build(queries, &corrections_, jitter_seed, ids);
    kernel.forward_density(want_grad);
    kernel.forward_color({}, false, {}, want_grad);
    kernel.composite_color();

    const int rays = kernel.ray_count();
    Eigen::Matrix3Xd d_color(3, rays);
    double photo = 0.0;
    for (int r = 0; r < rays; ++r) {
      const Vec3 diff = kernel.ray_color().col(r) - dataset_.entries[indices[begin + r]].pixel;
      photo += diff.squaredNorm();
      d_color.col(r) = photo_weight * 2.0 * diff * inv_b / 3.0;
    }
    photo_sums[ci] = photo;

    Eigen::VectorXd d_sigma_extra;
    if (geometry) {
      const Eigen::VectorXd& sigma = kernel.sigma();
      d_sigma_extra = Eigen::VectorXd::Zero(kernel.sample_count());
      double dens = 0.0;
      for (int r = 0; r < rays; ++r) {
        const double background = 1.0 - dataset_.entries[indices[begin + r]].mask;
        const int b = kernel.ray_begin(r);
        const int e = kernel.ray_end(r);
        dens += density_loss(std::span<const double>(sigma.data() + b, e - b), dataset_.entries[indices[begin + r]].mask);
        for (int s = b; s < e; ++s) d_sigma_extra[s] = density_weight * 2.0 * sigma[s] * background * inv_b;
      }
      density_sums[ci] = dens;
    }
    if (want_grad) kernel.backward(d_color, d_sigma_extra, chunk_grads_[ci]);
  }

  BatchLoss loss;
  for (int c = 0; c < n_chunks; ++c) {
    loss.photo += photo_sums[c];
    loss.density += density_sums[c];
  }
  loss.photo *= inv_b / 3.0;
  loss.density *= inv_b;
  loss.total = photo_weight * loss.photo + (geometry ? density_weight * loss.density : 0.0);

  if (want_grad) {
    std::copy(chunk_grads_[0].begin(), chunk_grads_[0].end(), gradient.begin());
    for (int c = 1; c < n_chunks; ++c) {
      const auto& g = chunk_grads_[c];
      for (std::size_t k = 0; k < g.size(); ++k) gradient[k] += g[k];
    }
  }
  return loss;
}

Adam::Adam(const ParameterLayout& layout, double beta1, double beta2, double epsilon)
    : layout_(layout), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(layout.total(), 0.0), v_(layout.total(), 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad,
                const std::array<double, kParamGroupCount>& lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto group = static_cast<ParamGroup>(g);
    const double rate = lr[g];
    for (std::size_t k = layout_.begin(group); k < layout_.end(group); ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
      if (rate == 0.0) continue;
      params[k] -= rate * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
  }
}

RayBatcher::RayBatcher(std::size_t count, std::uint64_t seed) : order_(count), rng_(seed) {
  if (count == 0) throw std::invalid_argument("RayBatcher: empty dataset");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void RayBatcher::reshuffle() { std::shuffle(order_.begin(), order_.end(), rng_); }

std::vector<std::size_t> RayBatcher::next(std::size_t batch) {
  std::vector<std::size_t> out;
  out.reserve(batch);
  while (out.size() < batch) {
    if (cursor_ == order_.size()) {
      reshuffle();
      cursor_ = 0;
    }
    const std::size_t take = std::min(batch - out.size(), order_.size() - cursor_);
    out.insert(out.end(), order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    if (cursor_ == order_.size()) ++epoch_;
  }
  return out;
}

std::string to_json_line(const TrainRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  j["loss_photo"] = r.photo;
  j["loss_sigma"] = r.density;
  j["psnr"] = r.psnr;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

TrainResult train_model(const RayDataset& dataset, const FieldConfig& field_config, const TrainConfig& config,
                        TrainMode mode, const TrainOptions& options) {
  config.validate();
  if (dataset.entries.empty()) throw std::invalid_argument("train_model: empty dataset");
  FieldConfig fc = field_config;
  fc.num_images = dataset.num_images();
  fc.bounds = dataset.bounds;

  TrainResult result{options.initial ? *options.initial : FieldParameters::initialize(fc, config.seed), {}};
  FieldParameters& params = result.params;
  if (params.config() != fc) throw std::invalid_argument("train_model: initial parameters do not match the config");
  if (!options.fixed_pose_corrections.empty()) {
    if (static_cast<int>(options.fixed_pose_corrections.size()) != fc.num_images)
      throw std::invalid_argument("train_model: one pose correction per image expected");
    for (int i = 0; i < fc.num_images; ++i) params.set_pose_correction(i, options.fixed_pose_corrections[i]);
  }

  const bool geometry = mode == TrainMode::kGeometry;
  std::array<double, kParamGroupCount> lr{};
  lr[static_cast<int>(ParamGroup::kGrid)] = config.lr_grid;
  lr[static_cast<int>(ParamGroup::kDensityMlp)] = config.lr_mlp;
  lr[static_cast<int>(ParamGroup::kColorMlp)] = config.lr_mlp;
  lr[static_cast<int>(ParamGroup::kEmbedding)] = config.lr_embedding;
  lr[static_cast<int>(ParamGroup::kPoseCorrection)] = geometry ? 0.0 : config.lr_pose;

  BatchEvaluator evaluator(dataset, config.samples_per_ray, config.chunk_rays);
  Adam adam(params.layout(), config.beta1, config.beta2, config.adam_epsilon);
  RayBatcher batcher(dataset.entries.size(), mix_seed(config.seed, 0x6261746368ULL));
  std::vector<double> grad(params.flat().size());
  const auto start = std::chrono::steady_clock::now();
  int nonfinite = 0;

  for (int it = 0; it < config.iterations; ++it) {
    const auto batch = batcher.next(config.batch_rays);
    const BatchLoss loss = evaluator.evaluate(params, batch, mode, config.photo_weight, config.density_weight,
                                              mix_seed(config.seed, 0x6a6974746572ULL, it), grad);
    const bool finite = std::isfinite(loss.total) &&
                        std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
    if (!finite) {
      if (++nonfinite >= config.max_nonfinite_batches) {
        throw TrainingDiverged("training diverged: " + std::to_string(nonfinite) +
                               " consecutive non-finite batches ending at iteration " + std::to_string(it) +
                               " (L_photo=" + std::to_string(loss.photo) + ", L_sigma=" + std::to_string(loss.density) +
                               ")");
      }
      continue;
    }
    nonfinite = 0;
    adam.step(params.flat(), grad, lr);
    if (!geometry) {
      for (int i = 0; i < fc.num_images; ++i) {
        PoseCorrection c = params.pose_correction(i);
        const Vec3 before = c.rotation;
        c.canonicalize();
        if (c.rotation != before) params.set_pose_correction(i, c);
      }
    }

    const bool last = it + 1 == config.iterations;
    if ((config.log_every > 0 && (it % config.log_every == 0)) || last) {
      TrainRecord rec;
      rec.iteration = it;
      rec.photo = loss.photo;
      rec.density = loss.density;
      rec.psnr = psnr_from_mse(loss.photo);
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.push_back(rec);
      if (options.on_record) options.on_record(rec);
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() && (it + 1) % config.checkpoint_every == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      save_checkpoint(config.checkpoint_dir / ("iter_" + std::to_string(it + 1) + ".ckpt"), params);
    }
  }
  return result;
}

double psnr_from_mse(double mse) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double image_mse(const Image& a, const Image& b) {
  if (!a.same_size(b)) throw std::invalid_argument("image_mse: size mismatch");
  const Image x = to_rgb(a);
  const Image y = to_rgb(b);
  double acc = 0.0;
  for (std::size_t k = 0; k < x.data.size(); ++k) {
    const double d = x.data[k] - y.data[k];
    acc += d * d;
  }
  return acc / static_cast<double>(x.data.size());
}

double evaluate_psnr(const FieldParameters& params, std::span<const EvalView> views,
                     const CameraIntrinsics& intrinsics, const RenderConfig& config) {
  if (views.empty()) throw std::invalid_argument("evaluate_psnr: no views");
  const Eigen::VectorXd mean = params.mean_embedding();
  double total = 0.0;
  for (const auto& v : views) {
    Pose pose = v.pose;
    std::vector<double> embedding(mean.data(), mean.data() + mean.size());
    if (v.trained_index >= 0) {
      pose = apply_pose_correction(v.pose, params.pose_correction(v.trained_index));
      const auto e = params.embedding(v.trained_index);
      embedding.assign(e.begin(), e.end());
    }
    const RenderOutput out = render_image(params, pose, intrinsics, embedding, config);
    total += psnr_from_mse(image_mse(out.color, v.image));
  }
  return total / static_cast<double>(views.size());
}

}  // namespace nerfaug
