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

#include "keylock/net/protected_model.hpp"

#include <algorithm>
#include <set>

#include "keylock/errors.hpp"
#include "keylock/nn/layers.hpp"

namespace keylock::net {

ProtectedModel::ProtectedModel(nn::Network<float> network, std::optional<ArchConfig> arch)
    : network_(std::move(network)), arch_(std::move(arch)) {
  for (std::size_t i = 0; i < network_.layer_count(); ++i) {
    const auto* slot = dynamic_cast<const nn::ShuffleSlot<float>*>(&network_.layer(i));
    if (slot == nullptr) continue;
    const nn::Shape& s = network_.shape_after(i);
    if (s.size() != 3) {
      throw ShapeError("shuffle slot " + slot->placement() + " sees shape " +
                       nn::to_string(s));
    }
    placements_.push_back({slot->placement(), s[0], s[1], s[2], i});
  }
}

ProtectedModel ProtectedModel::build(const ArchConfig& arch, std::uint64_t init_seed) {
  return ProtectedModel(nn::build_network<float>(arch.input, arch_layers(arch), init_seed),
                        arch);
}

ProtectedModel ProtectedModel::from_layers(const nn::Shape& input,
                                           const std::vector<nn::LayerSpec>& specs,
                                           std::uint64_t init_seed) {
  return ProtectedModel(nn::build_network<float>(input, specs, init_seed));
}

const Placement& ProtectedModel::placement(std::string_view id) const {
  for (const auto& p : placements_) {
    if (p.id == id) return p;
  }
  throw ConfigError("unknown placement '" + std::string(id) + "'");
}

const ActivePlacement* ProtectedModel::find_active(std::string_view id) const {
  for (const auto& a : active_) {
    if (a.placement.id == id) return &a;
  }
  return nullptr;
}

void ProtectedModel::mark_protected(std::span<const std::string> ids,
                                    std::size_t block_size) {
  if (ids.empty()) throw ConfigError("no placements to protect");
  std::set<std::string> seen;
  std::vector<ActivePlacement> added;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ConfigError("placement '" + id + "' listed twice");
    if (find_active(id) != nullptr) {
      throw ConfigError("placement '" + id + "' is already protected");
    }
    const Placement& p = placement(id);
    shuffle::BlockSpec spec{block_size, p.channels};
    try {
      spec.validate(p.height, p.width);
    } catch (const std::exception& e) {
      throw ConfigError("placement '" + id + "': " + e.what());
    }
    added.push_back({p, spec});
  }
  active_.insert(active_.end(), added.begin(), added.end());
  std::sort(active_.begin(), active_.end(), [](const auto& a, const auto& b) {
    return a.placement.layer_index < b.placement.layer_index;
  });
  if (key_) bind_key(*key_);
}

void ProtectedModel::protect(std::span<const std::string> ids, std::size_t block_size,
                             const shuffle::SecretKey& key) {
  mark_protected(ids, block_size);
  bind_key(key);
}

void ProtectedModel::bind_key(const shuffle::SecretKey& key) {
  correct_ = bindings_for_key(key);
  key_ = key;
}

void ProtectedModel::unbind_key() noexcept {
  key_.reset();
  correct_ = {};
}

std::shared_ptr<const shuffle::BlockShufflePlan> ProtectedModel::make_plan(
    const ActivePlacement& active, shuffle::PermutationVector v) const {
  return std::make_shared<const shuffle::BlockShufflePlan>(
      std::move(v), active.spec, active.placement.height, active.placement.width);
}

nn::ShuffleBindings ProtectedModel::bindings_for_key(const shuffle::SecretKey& key) const {
  nn::ShuffleBindings out;
  for (const auto& a : active_) {
    out.bind(a.placement.id,
             make_plan(a, shuffle::derive_permutation(key, a.spec.vector_length())));
  }
  return out;
}

nn::ShuffleBindings ProtectedModel::bindings(const KeyMode& mode) const {
  switch (mode.kind) {
    case KeyMode::Kind::correct:
      if (!key_) throw ConfigError("no key bound to the model");
      return correct_;
    case KeyMode::Kind::wrong:
      if (!mode.key) throw ConfigError("wrong-key mode needs a key");
      return bindings_for_key(*mode.key);
    case KeyMode::Kind::none:
      return {};
  }
  return {};
}

}  // namespace keylock::net
