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

#include "keylock/net/arch.hpp"

#include "keylock/errors.hpp"

namespace keylock::net {

std::string_view to_string(ArchPreset preset) {
  switch (preset) {
    case ArchPreset::resnet_tiny: return "resnet_tiny";
    case ArchPreset::cnn_micro: return "cnn_micro";
  }
  return "unknown";
}

ArchPreset parse_arch(std::string_view name) {
  if (name == "resnet_tiny") return ArchPreset::resnet_tiny;
  if (name == "cnn_micro") return ArchPreset::cnn_micro;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

ArchConfig ArchConfig::defaults(ArchPreset preset) {
  ArchConfig arch;
  arch.preset = preset;
  if (preset == ArchPreset::cnn_micro) arch.widths = {8, 16, 16, 32};
  return arch;
}

std::vector<nn::LayerSpec> arch_layers(const ArchConfig& arch) {
  using namespace nn;
  if (arch.input.size() != 3) throw ConfigError("input shape must be (C, H, W)");
  if (arch.classes < 2) throw ConfigError("need at least two classes");
  for (auto w : arch.widths) {
    if (w == 0) throw ConfigError("stage widths must be positive");
  }
  auto slot = [](std::string_view id) {
    return LayerSpec{BlockShuffleSpec{std::string(id)}, "shuffle." + std::string(id)};
  };

  std::vector<LayerSpec> specs;
  if (arch.preset == ArchPreset::resnet_tiny) {
    specs.push_back({Conv2dSpec{arch.widths[0], 3, 1, 1, false}, "stem.conv"});
    specs.push_back({BatchNormSpec{}, "stem.bn"});
    specs.push_back({ReluSpec{}, "stem.relu"});
    specs.push_back(slot(kPlacementIds[0]));
    const std::array<std::size_t, 4> strides = {1, 2, 2, 2};
    for (std::size_t s = 0; s < 4; ++s) {
      const std::string stage = "layer" + std::to_string(s + 1);
      specs.push_back({ResidualBlockSpec{arch.widths[s], strides[s]}, stage + ".block"});
      specs.push_back(slot(kPlacementIds[s + 1]));
    }
  } else {
    specs.push_back({Conv2dSpec{arch.widths[0], 3, 1, 1, true}, "stem.conv"});
    specs.push_back({ReluSpec{}, "stem.relu"});
    specs.push_back(slot(kPlacementIds[0]));
    for (std::size_t s = 0; s < 4; ++s) {
      const std::string stage = "layer" + std::to_string(s + 1);
      specs.push_back({Conv2dSpec{arch.widths[s], 3, 1, 1, true}, stage + ".conv"});
      specs.push_back({ReluSpec{}, stage + ".relu"});
      specs.push_back({MaxPoolSpec{2, 2}, stage + ".pool"});
      specs.push_back(slot(kPlacementIds[s + 1]));
    }
  }
  specs.push_back({GlobalAvgPoolSpec{}, "pool"});
  specs.push_back({LinearSpec{arch.classes}, "fc"});
  return specs;
}

}  // namespace keylock::net
