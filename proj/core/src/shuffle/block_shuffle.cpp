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

#include "keylock/shuffle/block_shuffle.hpp"

#include <limits>
#include <string>

namespace keylock::shuffle {

void BlockSpec::validate(std::size_t height, std::size_t width) const {
  if (block_size == 0) throw ShapeError("block size M must be at least 1");
  if (channels == 0) throw ShapeError("channel count c must be at least 1");
  if (height % block_size != 0 || width % block_size != 0) {
    throw ShapeError("feature map " + std::to_string(height) + "x" +
                     std::to_string(width) + " is not divisible by block size " +
                     std::to_string(block_size));
  }
}

BlockShufflePlan::BlockShufflePlan(PermutationVector v, BlockSpec spec,
                                   std::size_t height, std::size_t width)
    : v_(std::move(v)), spec_(spec), height_(height), width_(width) {
  spec_.validate(height_, width_);
  const std::size_t m = spec_.block_size;
  const std::size_t n = spec_.vector_length();
  if (v_.size() != n) {
    throw ShapeError("permutation has length " + std::to_string(v_.size()) +
                     " but c*M*M = " + std::to_string(n));
  }
  const std::size_t frame = spec_.channels * height_ * width_;
  if (frame > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("feature map too large for a shuffle plan");
  }

  // Flat (c, h, w) offset of element k of block (bi, bj).
  const auto offset = [&](std::size_t bi, std::size_t bj, std::size_t k) {
    const std::size_t ch = k / (m * m);
    const std::size_t row = (k / m) % m;
    const std::size_t col = k % m;
    return (ch * height_ + bi * m + row) * width_ + bj * m + col;
  };

  gather_.resize(frame);
  for (std::size_t bi = 0; bi < height_ / m; ++bi) {
    for (std::size_t bj = 0; bj < width_ / m; ++bj) {
      for (std::size_t k = 0; k < n; ++k) {
        gather_[offset(bi, bj, k)] =
            static_cast<std::uint32_t>(offset(bi, bj, v_[k]));
      }
    }
  }
}

void BlockShufflePlan::check_spans(std::size_t in, std::size_t out) const {
  if (in != out || in % gather_.size() != 0) {
    throw ShapeError("block shuffle expects whole " +
                     std::to_string(spec_.channels) + "x" +
                     std::to_string(height_) + "x" + std::to_string(width_) +
                     " frames, got " + std::to_string(in) + " -> " +
                     std::to_string(out) + " values");
  }
}

namespace detail {

std::array<std::size_t, 3> frame_extents(const nn::Shape& shape,
                                         const PermutationVector& v,
                                         const BlockSpec& spec) {
  if (shape.size() != 3 && shape.size() != 4) {
    throw ShapeError("block shuffle needs a (c,h,w) or (N,c,h,w) tensor, got " +
                     nn::to_string(shape));
  }
  const std::size_t off = shape.size() - 3;
  const std::size_t c = shape[off];
  const std::size_t h = shape[off + 1];
  const std::size_t w = shape[off + 2];
  if (c != spec.channels) {
    throw ShapeError("feature map has " + std::to_string(c) +
                     " channels but block spec says " +
                     std::to_string(spec.channels));
  }
  spec.validate(h, w);
  if (v.size() != spec.vector_length()) {
    throw ShapeError("permutation has length " + std::to_string(v.size()) +
                     " but c*M*M = " + std::to_string(spec.vector_length()));
  }
  return {c, h, w};
}

}  // namespace detail
}  // namespace keylock::shuffle
