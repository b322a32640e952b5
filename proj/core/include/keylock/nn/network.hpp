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

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "keylock/nn/layer.hpp"
#include "keylock/nn/layer_spec.hpp"

namespace keylock::nn {

/// A sequential stack of layers over (N, input_shape...) batches.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<std::unique_ptr<Layer<T>>> layers);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  /// Per-sample shape produced by layer i.
  const Shape& shape_after(std::size_t i) const { return shapes_.at(i + 1); }
  const Shape& output_shape() const { return shapes_.back(); }

  /// Index of the block_shuffle layer serving `placement`, if any.
  std::optional<std::size_t> find_slot(std::string_view placement) const;

  /// Train mode records activations for backward(); eval mode does not and
  /// leaves batchnorm statistics alone.
  Tensor<T> forward(const Tensor<T>& batch, Mode mode,
                    const ShuffleBindings& bindings = {});

  /// Eval-mode forward.
  Tensor<T> infer(const Tensor<T>& batch,
                  const ShuffleBindings& bindings = {}) const;

  /// Eval-mode run of layers [first, last) on x, which must be the input
  /// batch of layer `first`.
  Tensor<T> infer_range(const Tensor<T>& x, std::size_t first,
                        std::size_t last,
                        const ShuffleBindings& bindings = {}) const;

  /// Backpropagates from d(loss)/d(logits) after a train-mode forward.
  /// Gradients accumulate; returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& grad_logits);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<NamedBuffer<T>> buffers();
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void check_batch(const Tensor<T>& batch) const;
  static void check_finite(const Tensor<T>& activation, const Layer<T>& layer);

  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Shape> shapes_;
};

/// Builds layers from specs, naming unnamed ones "<index>.<kind>", and
/// initializes weights from `init_seed` (He-normal conv, uniform linear).
template <typename T>
Network<T> build_network(const Shape& input_shape,
                         const std::vector<LayerSpec>& specs,
                         std::uint64_t init_seed);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace keylock::nn
