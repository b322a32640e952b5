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

#include "keylock/nn/sgd.hpp"

#include <stdexcept>
#include <string>

namespace keylock::nn {

template <typename T>
void sgd_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity,
                const SgdHyper& hyper, double lr) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
    throw ShapeError("sgd_update: parameter " + to_string(param.shape()) +
                     ", gradient " + to_string(grad.shape()) + ", velocity " +
                     to_string(velocity.shape()) + " disagree");
  }
  const T momentum = static_cast<T>(hyper.momentum);
  const T decay = static_cast<T>(hyper.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grad[i] + decay * param[i]);
    param[i] -= rate * velocity[i];
  }
}

template <typename T>
void Sgd<T>::step(Network<T>& net, double lr) {
  for (auto* p : net.parameters()) {
    auto [it, inserted] = velocity_.try_emplace(p->name, p->value.shape());
    sgd_update(p->value, p->grad, it->second, hyper_, lr);
  }
}

double cyclic_lr(std::size_t step, std::size_t total_steps, double max_lr) {
  if (step >= total_steps) {
    throw std::out_of_range("cyclic_lr: step " + std::to_string(step) +
                            " outside [0, " + std::to_string(total_steps) + ")");
  }
  const double peak = 0.3 * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= peak) return peak > 0 ? max_lr * s / peak : max_lr;
  return max_lr * (static_cast<double>(total_steps) - s) /
         (static_cast<double>(total_steps) - peak);
}

template void sgd_update(Tensor<float>&, const Tensor<float>&, Tensor<float>&,
                         const SgdHyper&, double);
template void sgd_update(Tensor<double>&, const Tensor<double>&, Tensor<double>&,
                         const SgdHyper&, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace keylock::nn
