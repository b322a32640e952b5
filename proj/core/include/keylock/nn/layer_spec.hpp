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
#include <string>
#include <variant>
#include <vector>

namespace keylock::nn {

struct Conv2dSpec {
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  bool bias = true;
};
struct BatchNormSpec {};
struct ReluSpec {};
struct MaxPoolSpec {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};
struct GlobalAvgPoolSpec {};
struct LinearSpec {
  std::size_t out_features = 1;
};
/// conv3x3(stride)-bn-relu-conv3x3-bn plus shortcut, then relu.
struct ResidualBlockSpec {
  std::size_t out_channels = 1;
  std::size_t stride = 1;
};
/// Keyed block shuffle slot; identity unless a plan is bound to `placement`.
struct BlockShuffleSpec {
  std::string placement;
};

using LayerKind =
    std::variant<Conv2dSpec, BatchNormSpec, ReluSpec, MaxPoolSpec,
                 GlobalAvgPoolSpec, LinearSpec, ResidualBlockSpec,
                 BlockShuffleSpec>;

struct LayerSpec {
  LayerKind kind;
  std::string name;  // empty -> "<index>.<kind>"
};

}  // namespace keylock::nn
