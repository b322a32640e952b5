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

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "keylock/nn/layer_spec.hpp"
#include "keylock/nn/tensor.hpp"

namespace keylock::net {

enum class ArchPreset { resnet_tiny, cnn_micro };

std::string_view to_string(ArchPreset preset);
/// Throws ConfigError on an unknown name.
ArchPreset parse_arch(std::string_view name);

/// Placement ids, in network order.
inline constexpr std::array<std::string_view, 5> kPlacementIds = {
    "initial_conv", "layer1", "layer2", "layer3", "layer4"};

struct ArchConfig {
  ArchPreset preset = ArchPreset::resnet_tiny;
  nn::Shape input = {3, 32, 32};
  std::size_t classes = 10;
  /// Channel widths of layer1..layer4; the stem uses widths[0].
  std::array<std::size_t, 4> widths = {16, 32, 64, 128};

  static ArchConfig defaults(ArchPreset preset);
};

/// resnet_tiny: conv3x3-bn-relu stem, four residual stages (strides 1, 2,
/// 2, 2), global average pool, linear head.
/// cnn_micro: conv3x3-relu stem, four conv3x3-relu-maxpool stages, global
/// average pool, linear head.
/// Both carry a shuffle slot after the stem and after each stage.
std::vector<nn::LayerSpec> arch_layers(const ArchConfig& arch);

}  // namespace keylock::net
