// Copyright 2026 The Keylock Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "keylock/nn/layer.hpp"

namespace keylock::nn {

/// 2-D convolution over NCHW input with zero padding.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, std::size_t stride, std::size_t pad, bool bias);

  std::string_view kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& sample) const override;
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Conv2d>(*this);
  }

  /// He-normal weights, zero bias.
  void initialize(std::mt19937_64& rng);

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  std::size_t in_, out_, k_, stride_, pad_;
  bool has_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// Per-channel batch normalization, eps 1e-5, running-stat momentum 0.1.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d(std::string name, std::size_t channels);

  std::string_view kind() const override { return "batchnorm2d"; }
  Shape output_shape(const Shape& sample) const override;
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<BatchNorm2d>(*this);
  }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  std::size_t channels_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> normalized_;
  std::vector<double> inv_std_;
};

/// max(x, 0); the subgradient at 0 is 0.
template <typename T>
class Relu final : public Layer<T> {
 public:
  explicit Relu(std::string name) : Layer<T>(std::move(name)) {}

  std::string_view kind() const override { return "relu"; }
  Shape output_shape(const Shape& sample) const override { return sample; }
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Relu>(*this);
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(std::string name, std::size_t kernel, std::size_t stride);

  std::string_view kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& sample) const override;
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<MaxPool2d>(*this);
  }

 private:
  Tensor<T> pool(const Tensor<T>& x, std::vector<std::size_t>* argmax) const;

  std::size_t k_, stride_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

/// (N, C, H, W) -> (N, C) spatial mean.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  explicit GlobalAvgPool(std::string name) : Layer<T>(std::move(name)) {}

  std::string_view kind() const override { return "global_avgpool"; }
  Shape output_shape(const Shape& sample) const override;
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }

 private:
  Shape input_shape_;
};

/// y = x W^T + b. Trailing input axes are flattened.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  std::string_view kind() const override { return "linear"; }
  Shape output_shape(const Shape& sample) const override;
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Linear>(*this);
  }

  /// U(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void initialize(std::mt19937_64& rng);

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

/// Basic residual block with an optional 1x1 projection shortcut.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(std::string name, std::size_t in_channels,
                std::size_t out_channels, std::size_t stride);

  std::string_view kind() const override { return "residual_block"; }
  Shape output_shape(const Shape& sample) const override;
  Tensor<T> infer(const Tensor<T>& x, const ShuffleBindings&) const override;
  Tensor<T> forward(const Tensor<T>& x, const ShuffleBindings&) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }

  void initialize(std::mt19937_64& rng);

 private:
  bool projection_;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Relu<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  std::optional<Conv2d<T>> short_conv_;
  std::optional<BatchNorm2d<T>> short_bn_;
  Relu<T> relu_out_;
};

/// Keyed block shuffle at a named placement. Owns no parameters.
template <typename T>
class ShuffleSlot final : public Layer<T> {
 public:
  ShuffleSlot(std::string name, std::string placement)
      : Layer<T>(std::move(name)), placement_(std::move(placement)) {}

  std::string_view kind() const override { return "block_shuffle"; }
  const std::string& placement() const noexcept { return placement_; }
  Shape output_shape(const Shape& sample) const override { return sample; }
  Tensor<T> infer(const Tensor<T>& x,
                  const ShuffleBindings& bindings) const override;
  Tensor<T> forward(const Tensor<T>& x,
                    const ShuffleBindings& bindings) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ShuffleSlot>(*this);
  }

 private:
  std::string placement_;
  std::shared_ptr<const shuffle::BlockShufflePlan> active_;
};

}  // namespace keylock::nn
