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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "keylock/nn/network.hpp"

namespace keylock::nn {

/// |a - b| / max(|a|, |b|, floor). The floor keeps entries whose true
/// gradient is ~0 from reporting round-off noise as relative error.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central differences of f at x: (f(x + eps e_i) - f(x - eps e_i)) / 2 eps.
std::vector<double> numerical_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double epsilon);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares backprop gradients of the mean cross-entropy against central
/// differences for every scalar of every parameter. Intended for small
/// models (<= 1e4 parameters). Forward passes run in train mode.
GradCheckReport finite_diff_check(Network<double>& net,
                                  const Tensor<double>& batch,
                                  std::span<const int> labels, double epsilon,
                                  const ShuffleBindings& bindings = {});

}  // namespace keylock::nn
