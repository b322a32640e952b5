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
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keylock/net/arch.hpp"
#include "keylock/nn/network.hpp"
#include "keylock/shuffle/block_shuffle.hpp"
#include "keylock/shuffle/permutation.hpp"
#include "keylock/shuffle/secret_key.hpp"

namespace keylock::net {

/// A shuffle slot of the network and the feature map it sees.
struct Placement {
  std::string id;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t layer_index = 0;
};

/// A placement selected for protection, with its block size.
struct ActivePlacement {
  Placement placement;
  shuffle::BlockSpec spec;
};

/// Which permutation the protected slots apply at inference time.
struct KeyMode {
  enum class Kind { correct, wrong, none };
  Kind kind = Kind::correct;
  std::optional<shuffle::SecretKey> key;  // set for Kind::wrong

  static KeyMode correct() { return {Kind::correct, std::nullopt}; }
  static KeyMode wrong(shuffle::SecretKey key) { return {Kind::wrong, std::move(key)}; }
  static KeyMode none() { return {Kind::none, std::nullopt}; }
};

/// A network plus the set of placements it keys, and optionally the key.
///
/// Protected slots permute with derive_permutation(key, c * M * M). With no
/// key bound the model still knows which placements are protected, which is
/// what a stolen copy looks like.
class ProtectedModel {
 public:
  ProtectedModel() = default;
  explicit ProtectedModel(nn::Network<float> network,
                          std::optional<ArchConfig> arch = std::nullopt);

  static ProtectedModel build(const ArchConfig& arch, std::uint64_t init_seed);
  static ProtectedModel from_layers(const nn::Shape& input,
                                    const std::vector<nn::LayerSpec>& specs,
                                    std::uint64_t init_seed);

  const std::optional<ArchConfig>& arch() const noexcept { return arch_; }
  nn::Network<float>& network() noexcept { return network_; }
  const nn::Network<float>& network() const noexcept { return network_; }

  /// Every shuffle slot, in network order.
  const std::vector<Placement>& placements() const noexcept { return placements_; }
  /// Throws ConfigError for an unknown id.
  const Placement& placement(std::string_view id) const;

  /// Marks `ids` as protected with block size M and binds `key`. Throws
  /// ConfigError on unknown or repeated ids, on an id already protected, or
  /// when M does not divide the feature map.
  void protect(std::span<const std::string> ids, std::size_t block_size,
               const shuffle::SecretKey& key);
  /// Same, without binding a key.
  void mark_protected(std::span<const std::string> ids, std::size_t block_size);

  const std::vector<ActivePlacement>& active() const noexcept { return active_; }
  bool is_protected() const noexcept { return !active_.empty(); }
  const ActivePlacement* find_active(std::string_view id) const;

  void bind_key(const shuffle::SecretKey& key);
  void unbind_key() noexcept;
  const std::optional<shuffle::SecretKey>& key() const noexcept { return key_; }

  /// Slot plans for `mode`. Correct needs a bound key (ConfigError
  /// otherwise); none yields empty bindings.
  nn::ShuffleBindings bindings(const KeyMode& mode) const;
  /// Slot plans derived from an arbitrary key.
  nn::ShuffleBindings bindings_for_key(const shuffle::SecretKey& key) const;

  /// Plan for one active placement and an explicit permutation.
  std::shared_ptr<const shuffle::BlockShufflePlan> make_plan(
      const ActivePlacement& active, shuffle::PermutationVector v) const;

 private:
  nn::Network<float> network_;
  std::optional<ArchConfig> arch_;
  std::vector<Placement> placements_;
  std::vector<ActivePlacement> active_;
  std::optional<shuffle::SecretKey> key_;
  nn::ShuffleBindings correct_;
};

}  // namespace keylock::net
