// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/field.hpp"

#include <json.hpp>

#include <cmath>
#include <random>
#include <stdexcept>

namespace nerfaug {

FieldConfig FieldConfig::compact() {
  FieldConfig c;
  c.grid_resolution = 64;
  c.grid_channels = 8;
  c.density_hidden = {32};
  c.density_feature_dim = 15;
  c.color_hidden = {32};
  c.embedding_dim = 16;
  c.sh_degree = 2;
  return c;
}

MlpShape FieldConfig::density_shape() const {
  MlpShape s;
  s.widths.push_back(3 * grid_channels);
  for (int w : density_hidden) s.widths.push_back(w);
  s.widths.push_back(1 + density_feature_dim);
  return s;
}

int FieldConfig::color_input_dim() const {
  return density_feature_dim + (sh_degree + 1) * (sh_degree + 1) + embedding_dim;
}

MlpShape FieldConfig::color_shape() const {
  MlpShape s;
  s.widths.push_back(color_input_dim());
  for (int w : color_hidden) s.widths.push_back(w);
  s.widths.push_back(3);
  return s;
}

void FieldConfig::validate() const {
  if (grid_resolution < 2 || grid_channels < 1) throw std::invalid_argument("field config: bad grid shape");
  if (density_feature_dim < 0 || embedding_dim < 0 || num_images < 0)
    throw std::invalid_argument("field config: negative dimension");
  if (sh_degree < 0 || sh_degree > DirectionEncoder::kMaxDegree)
    throw std::invalid_argument("field config: sh_degree must be in [0, 3]");
  for (int w : density_hidden)
    if (w < 1) throw std::invalid_argument("field config: hidden width must be positive");
  for (int w : color_hidden)
    if (w < 1) throw std::invalid_argument("field config: hidden width must be positive");
  if (!(bounds.extent().array() > 0.0).all()) throw std::invalid_argument("field config: empty bounding box");
}

std::string FieldConfig::to_json() const {
  nlohmann::json j;
  j["grid_resolution"] = grid_resolution;
  j["grid_channels"] = grid_channels;
  j["density_hidden"] = density_hidden;
  j["density_feature_dim"] = density_feature_dim;
  j["color_hidden"] = color_hidden;
  j["embedding_dim"] = embedding_dim;
  j["sh_degree"] = sh_degree;
  j["num_images"] = num_images;
  j["bounds_min"] = {bounds.min.x(), bounds.min.y(), bounds.min.z()};
  j["bounds_max"] = {bounds.max.x(), bounds.max.y(), bounds.max.z()};
  return j.dump();
}

FieldConfig FieldConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FieldConfig c;
  c.grid_resolution = j.at("grid_resolution");
  c.grid_channels = j.at("grid_channels");
  c.density_hidden = j.at("density_hidden").get<std::vector<int>>();
  c.density_feature_dim = j.at("density_feature_dim");
  c.color_hidden = j.at("color_hidden").get<std::vector<int>>();
  c.embedding_dim = j.at("embedding_dim");
  c.sh_degree = j.at("sh_degree");
  c.num_images = j.at("num_images");
  const auto lo = j.at("bounds_min").get<std::vector<double>>();
  const auto hi = j.at("bounds_max").get<std::vector<double>>();
  c.bounds.min = Vec3(lo.at(0), lo.at(1), lo.at(2));
  c.bounds.max = Vec3(hi.at(0), hi.at(1), hi.at(2));
  return c;
}

std::uint64_t FieldConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : to_json()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ParameterLayout::ParameterLayout(const FieldConfig& config) {
  const std::size_t sizes[kParamGroupCount] = {
      config.grid_shape().parameter_count(),
      config.density_shape().parameter_count(),
      config.color_shape().parameter_count(),
      static_cast<std::size_t>(config.embedding_dim) * config.num_images,
      6u * static_cast<std::size_t>(config.num_images),
  };
  offset[0] = 0;
  for (int g = 0; g < kParamGroupCount; ++g) offset[g + 1] = offset[g] + sizes[g];
}

FieldParameters::FieldParameters(FieldConfig config)
    : config_(std::move(config)), layout_(config_), values_(layout_.total(), 0.0) {
  config_.validate();
}

FieldParameters FieldParameters::initialize(const FieldConfig& config, std::uint64_t seed) {
  FieldParameters p(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> grid_dist(-1e-4, 1e-4);
  for (double& v : p.group(ParamGroup::kGrid)) v = grid_dist(rng);
  kaiming_uniform_init(config.density_shape(), p.group(ParamGroup::kDensityMlp), rng);
  kaiming_uniform_init(config.color_shape(), p.group(ParamGroup::kColorMlp), rng);
  return p;
}

FieldParameters FieldParameters::from_flat(const FieldConfig& config, std::vector<double> values) {
  FieldParameters p(config);
  if (values.size() != p.values_.size()) throw std::invalid_argument("FieldParameters: flat vector size mismatch");
  p.values_ = std::move(values);
  return p;
}

std::span<const double> FieldParameters::embedding(int image) const {
  if (image < 0 || image >= config_.num_images) throw std::out_of_range("embedding index out of range");
  return group(ParamGroup::kEmbedding).subspan(static_cast<std::size_t>(image) * config_.embedding_dim,
                                               config_.embedding_dim);
}

std::span<double> FieldParameters::embedding(int image) {
  if (image < 0 || image >= config_.num_images) throw std::out_of_range("embedding index out of range");
  return group(ParamGroup::kEmbedding).subspan(static_cast<std::size_t>(image) * config_.embedding_dim,
                                               config_.embedding_dim);
}

Eigen::VectorXd FieldParameters::mean_embedding() const {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(config_.embedding_dim);
  if (config_.num_images == 0) return mean;
  for (int i = 0; i < config_.num_images; ++i) {
    const auto e = embedding(i);
    mean += Eigen::Map<const Eigen::VectorXd>(e.data(), config_.embedding_dim);
  }
  return mean / config_.num_images;
}

PoseCorrection FieldParameters::pose_correction(int image) const {
  if (image < 0 || image >= config_.num_images) throw std::out_of_range("pose correction index out of range");
  const double* v = group(ParamGroup::kPoseCorrection).data() + 6 * static_cast<std::size_t>(image);
  return {Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
}

void FieldParameters::set_pose_correction(int image, const PoseCorrection& c) {
  if (image < 0 || image >= config_.num_images) throw std::out_of_range("pose correction index out of range");
  double* v = group(ParamGroup::kPoseCorrection).data() + 6 * static_cast<std::size_t>(image);
  for (int k = 0; k < 3; ++k) {
    v[k] = c.rotation[k];
    v[3 + k] = c.translation[k];
  }
}

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

FieldOutput field_forward(const FieldParameters& params, const RaySample& sample, std::span<const double> embedding,
                          std::span<const double> color_params) {
  const auto& cfg = params.config();
  if (static_cast<int>(embedding.size()) != cfg.embedding_dim)
    throw std::invalid_argument("field_forward: embedding dimension mismatch");
  const auto encoder = params.encoder();
  std::vector<double> features(encoder.feature_dim());
  encoder.encode(sample.position, features);

  const MlpShape density_shape = cfg.density_shape();
  std::vector<double> density_out(density_shape.output_dim());
  mlp_forward_single(density_shape, params.group(ParamGroup::kDensityMlp), features, density_out);

  FieldOutput out;
  out.sigma = softplus(density_out[0]);
  out.density_features.assign(density_out.begin() + 1, density_out.end());

  const DirectionEncoder dir(cfg.sh_degree);
  std::vector<double> color_in;
  color_in.reserve(cfg.color_input_dim());
  color_in.insert(color_in.end(), out.density_features.begin(), out.density_features.end());
  std::vector<double> sh(dir.output_dim());
  dir.encode(sample.theta, sample.phi, sh);
  color_in.insert(color_in.end(), sh.begin(), sh.end());
  color_in.insert(color_in.end(), embedding.begin(), embedding.end());

  const auto net = color_params.empty() ? params.group(ParamGroup::kColorMlp) : color_params;
  double raw[3];
  mlp_forward_single(cfg.color_shape(), net, color_in, raw);
  for (int c = 0; c < 3; ++c) out.rgb[c] = sigmoid(raw[c]);
  return out;
}

FieldEvaluator::FieldEvaluator(const FieldParameters& params)
    : params_(params),
      config_(params.config()),
      density_shape_(params.config().density_shape()),
      color_shape_(params.config().color_shape()),
      dir_encoder_(params.config().sh_degree) {}

void FieldEvaluator::forward_density(const SampleBatch& batch, bool record) {
  batch_ = &batch;
  color_recorded_ = false;
  const int n = batch.size();
  const auto encoder = params_.encoder();
  features_.resize(encoder.feature_dim(), n);
  clamped_count_ = 0;
  for (int s = 0; s < n; ++s) {
    const Vec3 p = batch.positions.col(s);
    if (encoder.encode(p, std::span<double>(features_.col(s).data(), features_.rows()))) ++clamped_count_;
  }
  mlp_forward(density_shape_, params_.group(ParamGroup::kDensityMlp), features_, density_out_,
              record ? &density_tape_ : nullptr);
  sigma_.resize(n);
  for (int s = 0; s < n; ++s) sigma_[s] = softplus(density_out_(0, s));
  density_recorded_ = record;
}

void FieldEvaluator::forward_color(std::span<const double> embedding, bool override_all,
                                   std::span<const double> color_params, bool record) {
  if (!batch_) throw std::logic_error("FieldEvaluator: color pass without a density pass");
  const SampleBatch& batch = *batch_;
  const int n = batch.size();
  const int f = config_.density_feature_dim;
  const int sh = dir_encoder_.output_dim();
  const int d = config_.embedding_dim;
  if (!embedding.empty() && static_cast<int>(embedding.size()) != d)
    throw std::invalid_argument("FieldEvaluator: embedding dimension mismatch");

  embedding_override_.assign(embedding.begin(), embedding.end());
  override_all_ = override_all;
  color_in_.resize(f + sh + d, n);
  color_in_.topRows(f) = density_out_.bottomRows(f);
  for (int s = 0; s < n; ++s) {
    double* col = color_in_.col(s).data();
    dir_encoder_.encode(Vec3(batch.directions.col(s)), std::span<double>(col + f, sh));
    const int image = batch.image.empty() ? -1 : batch.image[s];
    if (override_all || image < 0) {
      if (embedding.empty()) throw std::invalid_argument("FieldEvaluator: sample needs an embedding override");
      std::copy(embedding.begin(), embedding.end(), col + f + sh);
    } else {
      const auto e = params_.embedding(image);
      std::copy(e.begin(), e.end(), col + f + sh);
    }
  }
  const auto net = color_params.empty() ? params_.group(ParamGroup::kColorMlp) : color_params;
  Eigen::MatrixXd raw;
  mlp_forward(color_shape_, net, color_in_, raw, record ? &color_tape_ : nullptr);
  rgb_.resize(3, n);
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < 3; ++c) rgb_(c, s) = sigmoid(raw(c, s));
  color_recorded_ = record && color_params.empty();
}

void FieldEvaluator::backward(const Eigen::VectorXd& d_sigma, const Eigen::Matrix3Xd& d_rgb, std::span<double> d_params,
                              Eigen::Matrix3Xd* d_positions, Eigen::Matrix3Xd* d_directions) {
  if (!batch_ || !density_recorded_ || !color_recorded_)
    throw std::logic_error("FieldEvaluator::backward: no recorded forward pass");
  const SampleBatch& batch = *batch_;
  const int n = batch.size();
  if (d_sigma.size() != n || d_rgb.cols() != n)
    throw std::logic_error("FieldEvaluator::backward: gradient batch does not match the recorded forward");
  if (d_params.size() != params_.layout().total())
    throw std::invalid_argument("FieldEvaluator::backward: gradient buffer has the wrong size");

  const auto& layout = params_.layout();
  const int f = config_.density_feature_dim;
  const int sh = dir_encoder_.output_dim();
  const int d = config_.embedding_dim;

  Eigen::MatrixXd d_raw_rgb = d_rgb.array() * rgb_.array() * (1.0 - rgb_.array());
  Eigen::MatrixXd d_color_in;
  mlp_backward(color_shape_, params_.group(ParamGroup::kColorMlp), color_tape_, d_raw_rgb,
               d_params.subspan(layout.begin(ParamGroup::kColorMlp), layout.size(ParamGroup::kColorMlp)),
               &d_color_in);

  if (d > 0 && !override_all_) {
    double* d_emb = d_params.data() + layout.begin(ParamGroup::kEmbedding);
    for (int s = 0; s < n; ++s) {
      const int image = batch.image.empty() ? -1 : batch.image[s];
      if (image < 0) continue;
      double* row = d_emb + static_cast<std::size_t>(image) * d;
      const double* g = d_color_in.col(s).data() + f + sh;
      for (int k = 0; k < d; ++k) row[k] += g[k];
    }
  }
  if (d_directions) {
    d_directions->setZero(3, n);
    for (int s = 0; s < n; ++s) {
      Vec3 dd = Vec3::Zero();
      dir_encoder_.backward(Vec3(batch.directions.col(s)),
                            std::span<const double>(d_color_in.col(s).data() + f, sh), dd);
      d_directions->col(s) = dd;
    }
  }

  Eigen::MatrixXd d_density_out(1 + f, n);
  for (int s = 0; s < n; ++s) d_density_out(0, s) = d_sigma[s] * sigmoid(density_out_(0, s));
  d_density_out.bottomRows(f) = d_color_in.topRows(f);
  Eigen::MatrixXd d_features;
  mlp_backward(density_shape_, params_.group(ParamGroup::kDensityMlp), density_tape_, d_density_out,
               d_params.subspan(layout.begin(ParamGroup::kDensityMlp), layout.size(ParamGroup::kDensityMlp)),
               &d_features);

  const auto encoder = params_.encoder();
  auto d_grid = d_params.subspan(layout.begin(ParamGroup::kGrid), layout.size(ParamGroup::kGrid));
  if (d_positions) d_positions->setZero(3, n);
  for (int s = 0; s < n; ++s) {
    Vec3 dp = Vec3::Zero();
    encoder.backward(Vec3(batch.positions.col(s)),
                     std::span<const double>(d_features.col(s).data(), d_features.rows()), d_grid,
                     d_positions ? &dp : nullptr);
    if (d_positions) d_positions->col(s) = dp;
  }
}

}  // namespace nerfaug
