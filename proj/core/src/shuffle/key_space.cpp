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

#include "keylock/shuffle/key_space.hpp"

#include <stdexcept>

namespace keylock::shuffle {
namespace {

// Product of the integers in [lo, hi].
BigInt range_product(std::uint64_t lo, std::uint64_t hi) {
  if (lo > hi) return 1;
  if (hi - lo < 16) {
    BigInt acc = 1;
    for (std::uint64_t k = lo; k <= hi; ++k) acc *= k;
    return acc;
  }
  const std::uint64_t mid = lo + (hi - lo) / 2;
  return range_product(lo, mid) * range_product(mid + 1, hi);
}

}  // namespace

BigInt factorial(std::uint64_t n) { return n < 2 ? BigInt(1) : range_product(2, n); }

BigInt key_space(const BlockSpec& spec) {
  if (spec.block_size == 0 || spec.channels == 0) {
    throw std::invalid_argument("key_space: c and M must be at least 1");
  }
  return factorial(spec.vector_length());
}

std::string key_space_symbol(const BlockSpec& spec) {
  return std::to_string(spec.vector_length()) + "!";
}

BigInt pair_count(std::uint64_t n) {
  if (n < 2) throw std::invalid_argument("pair_count: n must be at least 2");
  BigInt count = n;
  count *= n - 1;
  return count / 2;
}

}  // namespace keylock::shuffle
