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
#include <cstdint>
#include <span>
#include <vector>

#include "keylock/errors.hpp"
#include "keylock/nn/tensor.hpp"
#include "keylock/shuffle/permutation.hpp"

namespace keylock::shuffle {

/// Block side M and channel count c of the feature map being transformed.
struct BlockSpec {
  std::size_t block_size = 1;
  std::size_t channels = 1;

  /// Permutation length c * M * M.
  std::size_t vector_length() const noexcept {
    return channels * block_size * block_size;
  }

  /// Throws ShapeError unless M >= 1, c >= 1 and M divides both h and w.
  void validate(std::size_t height, std::size_t width) const;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// Gather table for one (c, h, w) frame.
///
/// Inside a block, element k is ordered channel-major:
///   k = ch * M * M + row * M + col.
/// Every M x M block of the output takes b'(k) = b(v[k]) from the matching
/// input block, with the same v for all blocks.
class BlockShufflePlan {
 public:
  BlockShufflePlan(PermutationVector v, BlockSpec spec, std::size_t height,
                   std::size_t width);

  const PermutationVector& permutation() const noexcept { return v_; }
  const BlockSpec& spec() const noexcept { return spec_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t frame_size() const noexcept { return gather_.size(); }

  /// out[i] = in[gather[i]], for every frame in `in`.
  template <typename T>
  void apply(std::span<const T> in, std::span<T> out) const {
    check_spans(in.size(), out.size());
    const std::size_t frame = gather_.size();
    for (std::size_t base = 0; base < in.size(); base += frame) {
      const T* src = in.data() + base;
      T* dst = out.data() + base;
      for (std::size_t i = 0; i < frame; ++i) dst[i] = src[gather_[i]];
    }
  }

  /// out[gather[i]] = in[i]; exact inverse of apply.
  template <typename T>
  void invert(std::span<const T> in, std::span<T> out) const {
    check_spans(in.size(), out.size());
    const std::size_t frame = gather_.size();
    for (std::size_t base = 0; base < in.size(); base += frame) {
      const T* src = in.data() + base;
      T* dst = out.data() + base;
      for (std::size_t i = 0; i < frame; ++i) dst[gather_[i]] = src[i];
    }
  }

 private:
  void check_spans(std::size_t in, std::size_t out) const;

  PermutationVector v_;
  BlockSpec spec_;
  std::size_t height_;
  std::size_t width_;
  std::vector<std::uint32_t> gather_;
};

namespace detail {
// Accepts (c, h, w) or (N, c, h, w) tensors; returns {c, h, w}.
std::array<std::size_t, 3> frame_extents(const nn::Shape& shape,
                                         const PermutationVector& v,
                                         const BlockSpec& spec);
}  // namespace detail

/// Forward transform of a (c, h, w) feature map or an (N, c, h, w) batch.
template <typename T>
nn::Tensor<T> apply_block_shuffle(const nn::Tensor<T>& x,
                                  const PermutationVector& v,
                                  const BlockSpec& spec) {
  const auto [c, h, w] = detail::frame_extents(x.shape(), v, spec);
  (void)c;
  const BlockShufflePlan plan(v, spec, h, w);
  nn::Tensor<T> out(x.shape());
  plan.apply<T>(x.values(), out.values());
  return out;
}

template <typename T>
nn::Tensor<T> invert_block_shuffle(const nn::Tensor<T>& x,
                                   const PermutationVector& v,
                                   const BlockSpec& spec) {
  const auto [c, h, w] = detail::frame_extents(x.shape(), v, spec);
  (void)c;
  const BlockShufflePlan plan(v, spec, h, w);
  nn::Tensor<T> out(x.shape());
  plan.invert<T>(x.values(), out.values());
  return out;
}

/// Gradient w.r.t. the shuffle input. The layer is a fixed permutation, so
/// this is the inverse transform applied to the output gradient.
template <typename T>
nn::Tensor<T> shuffle_vjp(const nn::Tensor<T>& grad_out,
                          const PermutationVector& v, const BlockSpec& spec) {
  return invert_block_shuffle(grad_out, v, spec);
}

}  // namespace keylock::shuffle
