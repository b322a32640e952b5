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
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "keylock/nn/tensor.hpp"

namespace keylock::data {

/// Labeled images, (N, C, H, W) float tensor plus N labels in [0, classes).
struct Dataset {
  nn::Tensor<float> images;
  std::vector<int> labels;
  std::size_t classes = 10;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  nn::Shape sample_shape() const {
    return nn::Shape(images.shape().begin() + 1, images.shape().end());
  }

  /// Rows `indices` in the given order.
  Dataset select(std::span<const std::size_t> indices) const;

  /// Image rows `indices` as an (n, C, H, W) batch.
  nn::Tensor<float> gather_images(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

/// Per-channel affine preprocessing, x -> (x - mean) / std.
struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;

  static Normalization fit(const Dataset& train);
  void apply(Dataset& dataset) const;
};

// ------------------------------------------------------------ CIFAR-10
//
// Binary batches: each record is 3073 bytes, one label byte followed by
// 3072 pixel bytes, the R plane then G then B, each 32x32 row-major. Pixel
// byte b maps to b / 255.

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarRecordsPerBatch = 10000;
inline constexpr std::size_t kCifarBatchBytes =
    kCifarRecordBytes * kCifarRecordsPerBatch;

/// Decodes whole records. Throws FormatError when the byte count is not a
/// multiple of 3073 or a label exceeds 9.
Dataset decode_cifar_records(std::span<const std::uint8_t> bytes,
                             std::string split);

/// Reads one batch file. With `expected_records`, any other size is a
/// FormatError naming the expected and actual byte counts.
Dataset read_cifar_batch(const std::filesystem::path& path,
                         std::optional<std::size_t> expected_records,
                         std::string split);

/// data_batch_1..5.bin -> train (50,000); test_batch.bin -> test (10,000).
/// Accepts the directory itself or its cifar-10-batches-bin child.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

/// Directory from KEYLOCK_DATA_DIR, if set.
std::optional<std::filesystem::path> default_data_dir();

// ------------------------------------------------------------ sampling

/// Deterministic index subset in ascending order. size == N returns every
/// index. Stratified sampling gives each class floor(size / K) rows, plus
/// one extra for the first size mod K classes; a class that runs short
/// hands its remainder to the following classes. Throws std::invalid_argument
/// when size > N.
std::vector<std::size_t> sample_indices(const Dataset& dataset, std::size_t size,
                                        std::uint64_t seed, bool stratified);

Dataset sample_subset(const Dataset& dataset, std::size_t size,
                      std::uint64_t seed, bool stratified);

// -------------------------------------------------------- augmentation

/// Random crop with zero padding `pad` on every side and a horizontal flip
/// with probability 1/2, applied independently to each image of `batch`.
void augment_batch(nn::Tensor<float>& batch, std::mt19937_64& rng,
                   std::size_t pad = 4);

// ------------------------------------------------------------ synthetic

/// Seeded CIFAR-shaped stand-in: each class owns a smooth colour template
/// and samples add noise. Values lie in [0, 1]. Used for tests and smoke
/// runs where the real data is absent.
Dataset synthetic_dataset(std::size_t count, std::size_t classes,
                          std::uint64_t seed, std::string split,
                          nn::Shape sample_shape = {3, 32, 32});

}  // namespace keylock::data
