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
#include <map>
#include <string>

#include "keylock/nn/network.hpp"

namespace keylock::nn {

struct SgdHyper {
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double max_lr = 0.2;
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
};

/// Classic momentum with L2 folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
template <typename T>
void sgd_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity,
                const SgdHyper& hyper, double lr);

/// Momentum SGD over all parameters of a network, velocity keyed by name.
template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdHyper hyper) : hyper_(hyper) {}

  void step(Network<T>& net, double lr);

  const SgdHyper& hyper() const noexcept { return hyper_; }
  std::map<std::string, Tensor<T>>& velocities() noexcept { return velocity_; }
  const std::map<std::string, Tensor<T>>& velocities() const noexcept {
    return velocity_;
  }

 private:
  SgdHyper hyper_;
  std::map<std::string, Tensor<T>> velocity_;
};

/// One-cycle triangular schedule: linear 0 -> max_lr over the first 30% of
/// steps, then linear max_lr -> 0 over the rest. Throws std::out_of_range
/// unless 0 <= step < total_steps.
double cyclic_lr(std::size_t step, std::size_t total_steps, double max_lr);

}  // namespace keylock::nn
