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

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "keylock/nn/tensor.hpp"
#include "keylock/shuffle/block_shuffle.hpp"

namespace keylock::nn {

enum class Mode { train, eval };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

/// Permutation plans looked up by placement id while running a network.
/// A placement with no entry passes its feature map through unchanged.
class ShuffleBindings {
 public:
  void bind(std::string placement,
            std::shared_ptr<const shuffle::BlockShufflePlan> plan);
  std::shared_ptr<const shuffle::BlockShufflePlan> find(
      std::string_view placement) const;
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::pair<std::string,
                        std::shared_ptr<const shuffle::BlockShufflePlan>>>
      entries_;
};

/// One stage of a sequential network.
///
/// Shapes passed to output_shape() are per sample (no batch axis). infer()
/// runs eval-mode math and touches no state. forward() runs train-mode math
/// and keeps whatever backward() needs; backward() accumulates into the
/// parameter gradients and returns the gradient w.r.t. the layer input.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const noexcept { return name_; }
  virtual std::string_view kind() const = 0;
  virtual Shape output_shape(const Shape& sample) const = 0;

  virtual Tensor<T> infer(const Tensor<T>& x,
                          const ShuffleBindings& bindings) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x,
                            const ShuffleBindings& bindings) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual void collect_parameters(std::vector<Parameter<T>*>&) {}
  virtual void collect_buffers(std::vector<NamedBuffer<T>>&) {}
  virtual std::unique_ptr<Layer> clone() const = 0;

 protected:
  Layer(const Layer&) = default;
  Layer& operator=(const Layer&) = default;

 private:
  std::string name_;
};

}  // namespace keylock::nn
