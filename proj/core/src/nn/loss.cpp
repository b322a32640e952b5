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

#include "keylock/nn/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace keylock::nn {

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.size() / std::max<std::size_t>(rows, 1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = logits.data() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                      std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross-entropy expects (N, classes) logits and N labels, got " +
                     to_string(logits.shape()) + " and " +
                     std::to_string(labels.size()));
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  CrossEntropy<T> out;
  out.grad_logits = Tensor<T>(logits.shape());
  double total = 0.0;
  std::vector<double> prob(classes);
  for (std::size_t n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const T* row = logits.data() + n * classes;
    double peak = row[0];
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > peak) {
        peak = row[c];
        best = c;
      }
    }
    if (best == static_cast<std::size_t>(label)) ++out.correct;
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(static_cast<double>(row[c]) - peak);
      denom += prob[c];
    }
    const double log_denom = std::log(denom);
    total += -(static_cast<double>(row[label]) - peak - log_denom);
    T* grad = out.grad_logits.data() + n * classes;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = prob[c] / denom;
      grad[c] = static_cast<T>((p - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0)) /
                               static_cast<double>(batch));
    }
  }
  out.loss = total / static_cast<double>(batch);
  if (!std::isfinite(out.loss)) throw NumericError("cross-entropy loss is not finite");
  return out;
}

template <typename T>
CrossEntropy<T> loss_and_grad(Network<T>& net, const Tensor<T>& batch,
                              std::span<const int> labels,
                              const ShuffleBindings& bindings) {
  net.zero_grad();
  const Tensor<T> logits = net.forward(batch, Mode::train, bindings);
  CrossEntropy<T> ce = softmax_cross_entropy(logits, labels);
  net.backward(ce.grad_logits);
  return ce;
}

template std::vector<int> argmax_rows(const Tensor<float>&);
template std::vector<int> argmax_rows(const Tensor<double>&);
template CrossEntropy<float> softmax_cross_entropy(const Tensor<float>&,
                                                   std::span<const int>);
template CrossEntropy<double> softmax_cross_entropy(const Tensor<double>&,
                                                    std::span<const int>);
template CrossEntropy<float> loss_and_grad(Network<float>&, const Tensor<float>&,
                                           std::span<const int>,
                                           const ShuffleBindings&);
template CrossEntropy<double> loss_and_grad(Network<double>&,
                                            const Tensor<double>&,
                                            std::span<const int>,
                                            const ShuffleBindings&);

}  // namespace keylock::nn
