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
#include <span>
#include <vector>

#include "keylock/shuffle/secret_key.hpp"

namespace keylock::shuffle {

/// A bijection on {0, ..., n-1}. Construction validates it; swap keeps it.
class PermutationVector {
 public:
  PermutationVector() = default;
  explicit PermutationVector(std::vector<std::size_t> indices);

  static PermutationVector identity(std::size_t n);

  std::size_t size() const noexcept { return v_.size(); }
  std::size_t operator[](std::size_t k) const noexcept { return v_[k]; }
  std::span<const std::size_t> indices() const noexcept { return v_; }

  bool is_identity() const noexcept;
  PermutationVector inverse() const;

  /// Exchanges v[i] and v[j].
  void swap(std::size_t i, std::size_t j);

  friend bool operator==(const PermutationVector&,
                         const PermutationVector&) = default;

 private:
  std::vector<std::size_t> v_;
};

/// True when `indices` holds each of 0..size-1 exactly once.
bool is_bijection(std::span<const std::size_t> indices);

/// Counter-mode SHA-256 stream keyed by (seed || n as 8-byte big endian).
///
/// Block b of the stream is SHA-256(seed || be64(n) || be64(b)); each 32-byte
/// digest is consumed as four big-endian 64-bit words.
class KeyStream {
 public:
  KeyStream(const SecretKey& key, std::uint64_t n);

  std::uint64_t next_u64();

  /// Uniform integer in [0, bound) by rejection; bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound);

 private:
  void refill();

  SecretKey::Seed seed_;
  std::uint64_t n_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 4> words_{};
  std::size_t next_word_ = 4;
};

/// Deterministic permutation of length n for `key`.
///
/// Starts from the identity and runs Fisher-Yates from the top:
/// for i = n-1 .. 1, j = uniform_below(i + 1), swap(v[i], v[j]).
/// Throws std::invalid_argument when n == 0.
PermutationVector derive_permutation(const SecretKey& key, std::size_t n);

}  // namespace keylock::shuffle
