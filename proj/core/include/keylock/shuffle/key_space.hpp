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
#include <iterator>
#include <string>
#include <utility>

#include <boost/multiprecision/cpp_int.hpp>

#include "keylock/shuffle/block_shuffle.hpp"

namespace keylock::shuffle {

using BigInt = boost::multiprecision::cpp_int;

/// n! by balanced product splitting.
BigInt factorial(std::uint64_t n);

/// Number of distinct keys for a placement: (c * M * M)!.
BigInt key_space(const BlockSpec& spec);

/// "256!" style label for the key space of `spec`.
std::string key_space_symbol(const BlockSpec& spec);

/// n choose 2. Throws std::invalid_argument for n < 2.
BigInt pair_count(std::uint64_t n);

/// The index pairs (i, j), i < j, in lexicographic order:
/// (0,1), (0,2), ..., (0,n-1), (1,2), ..., (n-2,n-1).
class PairSet {
 public:
  using value_type = std::pair<std::size_t, std::size_t>;

  class iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = PairSet::value_type;
    using difference_type = std::ptrdiff_t;
    using pointer = const value_type*;
    using reference = value_type;

    iterator() = default;
    iterator(std::size_t n, std::size_t i, std::size_t j) : n_(n), i_(i), j_(j) {}

    value_type operator*() const { return {i_, j_}; }
    iterator& operator++() {
      if (++j_ >= n_) {
        ++i_;
        j_ = i_ + 1;
      }
      return *this;
    }
    iterator operator++(int) {
      auto copy = *this;
      ++*this;
      return copy;
    }
    friend bool operator==(const iterator& a, const iterator& b) {
      return a.i_ == b.i_ && a.j_ == b.j_;
    }

   private:
    std::size_t n_ = 0;
    std::size_t i_ = 0;
    std::size_t j_ = 0;
  };

  explicit PairSet(std::size_t n) : n_(n) {}

  std::size_t size() const noexcept { return n_ < 2 ? 0 : n_ * (n_ - 1) / 2; }
  iterator begin() const { return n_ < 2 ? end() : iterator(n_, 0, 1); }
  iterator end() const {
    const std::size_t last = n_ < 2 ? 0 : n_ - 1;
    return iterator(n_, last, last + 1);
  }

 private:
  std::size_t n_;
};

}  // namespace keylock::shuffle
