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
#include <span>

#include "keylock/nn/network.hpp"
#include "keylock/nn/tensor.hpp"

namespace keylock::nn {

template <typename T>
struct CrossEntropy {
  double loss = 0.0;       // mean over the batch
  Tensor<T> grad_logits;   // d(loss)/d(logits)
  std::size_t correct = 0; // argmax hits
};

/// Mean softmax cross-entropy. Throws std::out_of_range on a bad label.
template <typename T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                      std::span<const int> labels);

/// Train-mode forward, loss, and backward in one call. Zeroes the gradients
/// first, so on return every Parameter::grad holds d(loss)/d(param).
template <typename T>
CrossEntropy<T> loss_and_grad(Network<T>& net, const Tensor<T>& batch,
                              std::span<const int> labels,
                              const ShuffleBindings& bindings = {});

/// Index of the largest logit in each row; ties go to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace keylock::nn
