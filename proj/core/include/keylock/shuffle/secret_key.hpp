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
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

namespace keylock::shuffle {

/// 128-bit secret from which every in-network permutation is derived.
///
/// Equality and hashing look at the seed bytes only; the label is metadata.
class SecretKey {
 public:
  static constexpr std::size_t kSeedBytes = 16;
  using Seed = std::array<std::uint8_t, kSeedBytes>;

  SecretKey() = default;
  explicit SecretKey(const Seed& seed, std::string label = {})
      : seed_(seed), label_(std::move(label)) {}

  /// Parses exactly 32 lowercase hex characters.
  static SecretKey from_hex(std::string_view hex, std::string label = {});

  /// Draws 16 bytes from `rng`.
  template <typename Rng>
  static SecretKey random(Rng& rng, std::string label = {}) {
    Seed seed{};
    std::uniform_int_distribution<unsigned> byte(0, 255);
    for (auto& b : seed) b = static_cast<std::uint8_t>(byte(rng));
    return SecretKey(seed, std::move(label));
  }

  /// Fresh key from the operating system entropy source.
  static SecretKey generate(std::string label = {});

  const Seed& seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }

  std::string hex() const;

  /// First 8 hex characters of SHA-256(seed). Safe to publish.
  std::string fingerprint() const;

  friend bool operator==(const SecretKey& a, const SecretKey& b) noexcept {
    return a.seed_ == b.seed_;
  }

 private:
  Seed seed_{};
  std::string label_;
};

// Key file: line 1 is the 32-char lowercase hex seed, optional line 2 is a
// free-form label. See docs/key-format.md.
SecretKey parse_key_file(std::string_view text);
std::string format_key_file(const SecretKey& key);
SecretKey load_key_file(const std::filesystem::path& path);
void save_key_file(const std::filesystem::path& path, const SecretKey& key);

}  // namespace keylock::shuffle
