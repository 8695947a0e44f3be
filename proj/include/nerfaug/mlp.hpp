// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace nerfaug {

enum class Activation { kIdentity, kRelu };

/// Fully connected network shape. Hidden layers use `hidden_activation`; the
/// output layer is linear. Each layer is stored as its weight matrix
/// (out x in, column-major) followed by its bias vector.
struct MlpShape {
  std::vector<int> widths;  // input, hidden..., output
  Activation hidden_activation = Activation::kRelu;

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  Activation activation(int layer) const {
    return layer + 1 < layer_count() ? hidden_activation : Activation::kIdentity;
  }
  std::size_t parameter_count() const;
  std::size_t weight_offset(int layer) const;
  std::size_t bias_offset(int layer) const { return weight_offset(layer) + weight_count(layer); }
  std::size_t weight_count(int layer) const {
    return static_cast<std::size_t>(widths[layer]) * widths[layer + 1];
  }
};

/// Activations kept by a batched forward pass for the matching backward pass.
struct MlpTape {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer, (in x batch)
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;

ConstMatrixMap layer_weights(const MlpShape& shape, std::span<const double> params, int layer);
Eigen::Map<const Eigen::VectorXd> layer_bias(const MlpShape& shape, std::span<const double> params, int layer);

/// Column-batched forward pass: `input` is (in x batch), `output` becomes
/// (out x batch). When `tape` is non-null the activations are recorded.
void mlp_forward(const MlpShape& shape, std::span<const double> params, const Eigen::MatrixXd& input,
                 Eigen::MatrixXd& output, MlpTape* tape);

/// Accumulates parameter gradients into `d_params` and, when `d_input` is
/// non-null, writes the input gradient (in x batch).
void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpTape& tape,
                  const Eigen::MatrixXd& d_output, std::span<double> d_params, Eigen::MatrixXd* d_input);

/// Single-vector forward with plain loops; the serial reference path.
void mlp_forward_single(const MlpShape& shape, std::span<const double> params, std::span<const double> input,
                        std::span<double> output);

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases.
void kaiming_uniform_init(const MlpShape& shape, std::span<double> params, std::mt19937_64& rng);

/// An MLP that owns its parameters.
class Mlp {
 public:
  explicit Mlp(MlpShape shape) : shape_(std::move(shape)), params_(shape_.parameter_count(), 0.0) {}

  const MlpShape& shape() const { return shape_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const {
    Eigen::MatrixXd out;
    mlp_forward(shape_, params_, input, out, nullptr);
    return out;
  }

 private:
  MlpShape shape_;
  std::vector<double> params_;
};

}  // namespace nerfaug
