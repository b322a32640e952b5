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

#include "keylock/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "keylock/nn/loss.hpp"

namespace keylock::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::vector<double> numerical_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double epsilon) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + epsilon;
    const double plus = f(point);
    point[i] = saved - epsilon;
    const double minus = f(point);
    point[i] = saved;
    grad[i] = (plus - minus) / (2.0 * epsilon);
  }
  return grad;
}

GradCheckReport finite_diff_check(Network<double>& net,
                                  const Tensor<double>& batch,
                                  std::span<const int> labels, double epsilon,
                                  const ShuffleBindings& bindings) {
  loss_and_grad(net, batch, labels, bindings);
  GradCheckReport report;
  for (auto* param : net.parameters()) {
    const Tensor<double> analytic = param->grad;
    for (std::size_t i = 0; i < param->value.size(); ++i) {
      const double saved = param->value[i];
      param->value[i] = saved + epsilon;
      const double plus = softmax_cross_entropy(
          net.forward(batch, Mode::train, bindings), labels).loss;
      param->value[i] = saved - epsilon;
      const double minus = softmax_cross_entropy(
          net.forward(batch, Mode::train, bindings), labels).loss;
      param->value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double err = relative_error(analytic[i], numeric);
      ++report.checked;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = err;
        report.worst_parameter = param->name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace keylock::nn
