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

#include "keylock/nn/network.hpp"

#include <random>
#include <type_traits>

#include "keylock/nn/layers.hpp"

namespace keylock::nn {

template <typename T>
Network<T>::Network(Shape input_shape,
                    std::vector<std::unique_ptr<Layer<T>>> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  shapes_.push_back(input_shape_);
  for (const auto& layer : layers_) {
    try {
      shapes_.push_back(layer->output_shape(shapes_.back()));
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + layer->name() + "': " + e.what());
    }
  }
}

template <typename T>
Network<T>::Network(const Network& other)
    : input_shape_(other.input_shape_), shapes_(other.shapes_) {
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
std::optional<std::size_t> Network<T>::find_slot(std::string_view placement) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (const auto* slot = dynamic_cast<const ShuffleSlot<T>*>(layers_[i].get());
        slot && slot->placement() == placement) {
      return i;
    }
  }
  return std::nullopt;
}

template <typename T>
void Network<T>::check_batch(const Tensor<T>& batch) const {
  if (batch.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(),
                  batch.shape().begin() + 1)) {
    throw ShapeError("batch shape " + to_string(batch.shape()) +
                     " does not match network input (N, " +
                     to_string(input_shape_).substr(1));
  }
}

template <typename T>
void Network<T>::check_finite(const Tensor<T>& activation, const Layer<T>& layer) {
  if (!activation.all_finite()) {
    throw NumericError("non-finite activation after layer '" + layer.name() +
                       "' (" + std::string(layer.kind()) + ")");
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, Mode mode,
                              const ShuffleBindings& bindings) {
  if (mode == Mode::eval) return infer(batch, bindings);
  check_batch(batch);
  Tensor<T> x = batch;
  for (auto& layer : layers_) {
    x = layer->forward(x, bindings);
    check_finite(x, *layer);
  }
  return x;
}

template <typename T>
Tensor<T> Network<T>::infer(const Tensor<T>& batch,
                            const ShuffleBindings& bindings) const {
  check_batch(batch);
  return infer_range(batch, 0, layers_.size(), bindings);
}

template <typename T>
Tensor<T> Network<T>::infer_range(const Tensor<T>& x, std::size_t first,
                                  std::size_t last,
                                  const ShuffleBindings& bindings) const {
  if (first > last || last > layers_.size()) {
    throw std::out_of_range("infer_range: bad layer range");
  }
  Tensor<T> out = x;
  for (std::size_t i = first; i < last; ++i) {
    out = layers_[i]->infer(out, bindings);
    check_finite(out, *layers_[i]);
  }
  return out;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_logits) {
  Tensor<T> g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->backward(g);
  }
  return g;
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_) layer->collect_parameters(out);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Network<T>::parameters() const {
  std::vector<Parameter<T>*> mutable_params;
  for (auto& layer : layers_) layer->collect_parameters(mutable_params);
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
std::vector<NamedBuffer<T>> Network<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  for (auto& layer : layers_) layer->collect_buffers(out);
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t count = 0;
  for (const auto* p : parameters()) count += p->value.size();
  return count;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T{0});
}

namespace {

std::string_view kind_name(const LayerKind& kind) {
  return std::visit(
      [](const auto& spec) -> std::string_view {
        using S = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<S, Conv2dSpec>) return "conv2d";
        else if constexpr (std::is_same_v<S, BatchNormSpec>) return "batchnorm2d";
        else if constexpr (std::is_same_v<S, ReluSpec>) return "relu";
        else if constexpr (std::is_same_v<S, MaxPoolSpec>) return "maxpool2d";
        else if constexpr (std::is_same_v<S, GlobalAvgPoolSpec>) return "global_avgpool";
        else if constexpr (std::is_same_v<S, LinearSpec>) return "linear";
        else if constexpr (std::is_same_v<S, ResidualBlockSpec>) return "residual_block";
        else return "block_shuffle";
      },
      kind);
}

}  // namespace

template <typename T>
Network<T> build_network(const Shape& input_shape,
                         const std::vector<LayerSpec>& specs,
                         std::uint64_t init_seed) {
  std::mt19937_64 rng(init_seed);
  std::vector<std::unique_ptr<Layer<T>>> layers;
  Shape shape = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    std::string name = spec.name.empty()
                           ? std::to_string(i) + "." + std::string(kind_name(spec.kind))
                           : spec.name;
    const std::size_t channels = shape.empty() ? 0 : shape[0];
    std::unique_ptr<Layer<T>> layer = std::visit(
        [&](const auto& s) -> std::unique_ptr<Layer<T>> {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Conv2dSpec>) {
            auto conv = std::make_unique<Conv2d<T>>(name, channels, s.out_channels,
                                                    s.kernel, s.stride, s.pad, s.bias);
            conv->initialize(rng);
            return conv;
          } else if constexpr (std::is_same_v<S, BatchNormSpec>) {
            return std::make_unique<BatchNorm2d<T>>(name, channels);
          } else if constexpr (std::is_same_v<S, ReluSpec>) {
            return std::make_unique<Relu<T>>(name);
          } else if constexpr (std::is_same_v<S, MaxPoolSpec>) {
            return std::make_unique<MaxPool2d<T>>(name, s.kernel, s.stride);
          } else if constexpr (std::is_same_v<S, GlobalAvgPoolSpec>) {
            return std::make_unique<GlobalAvgPool<T>>(name);
          } else if constexpr (std::is_same_v<S, LinearSpec>) {
            auto fc = std::make_unique<Linear<T>>(name, element_count(shape),
                                                  s.out_features);
            fc->initialize(rng);
            return fc;
          } else if constexpr (std::is_same_v<S, ResidualBlockSpec>) {
            auto block = std::make_unique<ResidualBlock<T>>(
                name, channels, s.out_channels, s.stride);
            block->initialize(rng);
            return block;
          } else {
            return std::make_unique<ShuffleSlot<T>>(name, s.placement);
          }
        },
        spec.kind);
    try {
      shape = layer->output_shape(shape);
    } catch (const ShapeError& e) {
      throw ConfigError("layer '" + name + "': " + e.what());
    }
    layers.push_back(std::move(layer));
  }
  return Network<T>(input_shape, std::move(layers));
}

template class Network<float>;
template class Network<double>;
template Network<float> build_network<float>(const Shape&,
                                             const std::vector<LayerSpec>&,
                                             std::uint64_t);
template Network<double> build_network<double>(const Shape&,
                                               const std::vector<LayerSpec>&,
                                               std::uint64_t);

}  // namespace keylock::nn
