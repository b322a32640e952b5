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

#include "keylock/shuffle/permutation.hpp"

#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include <openssl/sha.h>

namespace keylock::shuffle {
namespace {

void put_be64(std::uint8_t* dst, std::uint64_t value) {
  for (int i = 7; i >= 0; --i) {
    dst[i] = static_cast<std::uint8_t>(value & 0xff);
    value >>= 8;
  }
}

std::uint64_t get_be64(const std::uint8_t* src) {
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value = (value << 8) | src[i];
  return value;
}

}  // namespace

bool is_bijection(std::span<const std::size_t> indices) {
  std::vector<bool> seen(indices.size(), false);
  for (std::size_t idx : indices) {
    if (idx >= indices.size() || seen[idx]) return false;
    seen[idx] = true;
  }
  return true;
}

PermutationVector::PermutationVector(std::vector<std::size_t> indices)
    : v_(std::move(indices)) {
  if (!is_bijection(v_)) {
    throw std::invalid_argument("permutation vector of length " +
                                std::to_string(v_.size()) +
                                " is not a bijection");
  }
}

PermutationVector PermutationVector::identity(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return PermutationVector(std::move(v));
}

bool PermutationVector::is_identity() const noexcept {
  for (std::size_t k = 0; k < v_.size(); ++k)
    if (v_[k] != k) return false;
  return true;
}

PermutationVector PermutationVector::inverse() const {
  std::vector<std::size_t> inv(v_.size());
  for (std::size_t k = 0; k < v_.size(); ++k) inv[v_[k]] = k;
  return PermutationVector(std::move(inv));
}

void PermutationVector::swap(std::size_t i, std::size_t j) {
  if (i >= v_.size() || j >= v_.size()) {
    throw std::out_of_range("permutation swap index out of range");
  }
  std::swap(v_[i], v_[j]);
}

KeyStream::KeyStream(const SecretKey& key, std::uint64_t n)
    : seed_(key.seed()), n_(n) {}

void KeyStream::refill() {
  std::uint8_t message[SecretKey::kSeedBytes + 16];
  std::copy(seed_.begin(), seed_.end(), message);
  put_be64(message + SecretKey::kSeedBytes, n_);
  put_be64(message + SecretKey::kSeedBytes + 8, counter_++);
  std::uint8_t digest[SHA256_DIGEST_LENGTH];
  SHA256(message, sizeof(message), digest);
  for (std::size_t w = 0; w < 4; ++w) words_[w] = get_be64(digest + 8 * w);
  next_word_ = 0;
}

std::uint64_t KeyStream::next_u64() {
  if (next_word_ == words_.size()) refill();
  return words_[next_word_++];
}

std::uint64_t KeyStream::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound is zero");
  // Accept x >= 2^64 mod bound so the accepted range is a multiple of bound.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= threshold) return x % bound;
  }
}

PermutationVector derive_permutation(const SecretKey& key, std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("derive_permutation: n must be positive");
  }
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  KeyStream stream(key, n);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(stream.uniform_below(i + 1));
    std::swap(v[i], v[j]);
  }
  return PermutationVector(std::move(v));
}

}  // namespace keylock::shuffle
