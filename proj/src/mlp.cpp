// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace nerfaug {

std::size_t MlpShape::parameter_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l) n += (static_cast<std::size_t>(widths[l]) + 1) * widths[l + 1];
  return n;
}

std::size_t MlpShape::weight_offset(int layer) const {
  std::size_t n = 0;
  for (int l = 0; l < layer; ++l) n += (static_cast<std::size_t>(widths[l]) + 1) * widths[l + 1];
  return n;
}

ConstMatrixMap layer_weights(const MlpShape& shape, std::span<const double> params, int layer) {
  return ConstMatrixMap(params.data() + shape.weight_offset(layer), shape.widths[layer + 1], shape.widths[layer]);
}

Eigen::Map<const Eigen::VectorXd> layer_bias(const MlpShape& shape, std::span<const double> params, int layer) {
  return Eigen::Map<const Eigen::VectorXd>(params.data() + shape.bias_offset(layer), shape.widths[layer + 1]);
}

void mlp_forward(const MlpShape& shape, std::span<const double> params, const Eigen::MatrixXd& input,
                 Eigen::MatrixXd& output, MlpTape* tape) {
  if (input.rows() != shape.input_dim()) throw std::invalid_argument("mlp_forward: input dimension mismatch");
  const int layers = shape.layer_count();
  if (tape) {
    tape->inputs.resize(layers);
    tape->pre.resize(layers);
  }
  Eigen::MatrixXd current = input;
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = layer_weights(shape, params, l) * current;
    z.colwise() += layer_bias(shape, params, l);
    if (tape) {
      tape->inputs[l] = std::move(current);
      tape->pre[l] = z;
    }
    if (shape.activation(l) == Activation::kRelu) z = z.cwiseMax(0.0);
    current = std::move(z);
  }
  output = std::move(current);
}

void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpTape& tape,
                  const Eigen::MatrixXd& d_output, std::span<double> d_params, Eigen::MatrixXd* d_input) {
  const int layers = shape.layer_count();
  if (static_cast<int>(tape.pre.size()) != layers || tape.pre.back().cols() != d_output.cols())
    throw std::logic_error("mlp_backward: tape does not match the upstream gradient");
  Eigen::MatrixXd grad = d_output;
  for (int l = layers - 1; l >= 0; --l) {
    if (shape.activation(l) == Activation::kRelu) grad = (tape.pre[l].array() > 0.0).select(grad, 0.0);
    MatrixMap dw(d_params.data() + shape.weight_offset(l), shape.widths[l + 1], shape.widths[l]);
    Eigen::Map<Eigen::VectorXd> db(d_params.data() + shape.bias_offset(l), shape.widths[l + 1]);
    dw.noalias() += grad * tape.inputs[l].transpose();
    db += grad.rowwise().sum();
    if (l > 0 || d_input) {
      Eigen::MatrixXd next = layer_weights(shape, params, l).transpose() * grad;
      grad = std::move(next);
    }
  }
  if (d_input) *d_input = std::move(grad);
}

void mlp_forward_single(const MlpShape& shape, std::span<const double> params, std::span<const double> input,
                        std::span<double> output) {
  std::vector<double> current(input.begin(), input.end());
  std::vector<double> next;
  for (int l = 0; l < shape.layer_count(); ++l) {
    const int in = shape.widths[l];
    const int out = shape.widths[l + 1];
    const double* w = params.data() + shape.weight_offset(l);
    const double* b = params.data() + shape.bias_offset(l);
    next.assign(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i) acc += w[static_cast<std::size_t>(i) * out + o] * current[i];
      acc += b[o];
      if (shape.activation(l) == Activation::kRelu && acc < 0.0) acc = 0.0;
      next[o] = acc;
    }
    current.swap(next);
  }
  std::copy(current.begin(), current.end(), output.begin());
}

void kaiming_uniform_init(const MlpShape& shape, std::span<double> params, std::mt19937_64& rng) {
  for (int l = 0; l < shape.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / shape.widths[l]);
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* w = params.data() + shape.weight_offset(l);
    for (std::size_t k = 0; k < shape.weight_count(l); ++k) w[k] = dist(rng);
    double* b = params.data() + shape.bias_offset(l);
    for (int k = 0; k < shape.widths[l + 1]; ++k) b[k] = 0.0;
  }
}

}  // namespace nerfaug
