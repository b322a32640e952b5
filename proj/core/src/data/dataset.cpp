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

#include "keylock/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "keylock/errors.hpp"

namespace keylock::data {

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  Dataset out;
  out.images = gather_images(indices);
  out.labels = gather_labels(indices);
  out.classes = classes;
  out.split = split;
  return out;
}

nn::Tensor<float> Dataset::gather_images(std::span<const std::size_t> indices) const {
  nn::Shape shape = images.shape();
  const std::size_t stride = size() == 0 ? 0 : images.size() / size();
  shape[0] = indices.size();
  nn::Tensor<float> out(shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw std::out_of_range("dataset index out of range");
    std::copy_n(images.data() + indices[r] * stride, stride, out.data() + r * stride);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Normalization Normalization::fit(const Dataset& train) {
  const std::size_t n = train.size();
  const std::size_t c = train.images.dim(1);
  const std::size_t plane = train.images.dim(2) * train.images.dim(3);
  Normalization norm;
  norm.mean.assign(c, 0.0f);
  norm.stddev.assign(c, 1.0f);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* src = train.images.data() + (i * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum += src[p];
        sq += static_cast<double>(src[p]) * src[p];
      }
    }
    const double count = static_cast<double>(n * plane);
    const double mean = sum / count;
    const double var = std::max(sq / count - mean * mean, 1e-12);
    norm.mean[ch] = static_cast<float>(mean);
    norm.stddev[ch] = static_cast<float>(std::sqrt(var));
  }
  return norm;
}

void Normalization::apply(Dataset& dataset) const {
  const std::size_t n = dataset.size();
  const std::size_t c = dataset.images.dim(1);
  if (mean.size() != c || stddev.size() != c) {
    throw ShapeError("normalization has " + std::to_string(mean.size()) +
                     " channels, dataset has " + std::to_string(c));
  }
  const std::size_t plane = dataset.images.dim(2) * dataset.images.dim(3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* px = dataset.images.data() + (i * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) px[p] = (px[p] - mean[ch]) / stddev[ch];
    }
  }
}

Dataset decode_cifar_records(std::span<const std::uint8_t> bytes, std::string split) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 data has " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of the " +
                      std::to_string(kCifarRecordBytes) + "-byte record");
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  Dataset out;
  out.split = std::move(split);
  out.classes = 10;
  out.images = nn::Tensor<float>({records, 3, 32, 32});
  out.labels.resize(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label " +
                        std::to_string(rec[0]));
    }
    out.labels[r] = rec[0];
    float* dst = out.images.data() + r * 3072;
    for (std::size_t p = 0; p < 3072; ++p) dst[p] = rec[1 + p] / 255.0f;
  }
  return out;
}

Dataset read_cifar_batch(const std::filesystem::path& path,
                         std::optional<std::size_t> expected_records,
                         std::string split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CIFAR-10 batch " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (expected_records && bytes.size() != *expected_records * kCifarRecordBytes) {
    throw FormatError(path.string() + ": expected " +
                      std::to_string(*expected_records * kCifarRecordBytes) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  return decode_cifar_records(bytes, std::move(split));
}

namespace {
Dataset concatenate(std::vector<Dataset> parts, std::string split) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  Dataset out;
  out.split = std::move(split);
  out.images = nn::Tensor<float>({total, 3, 32, 32});
  out.labels.reserve(total);
  float* dst = out.images.data();
  for (const auto& p : parts) {
    dst = std::copy(p.images.data(), p.images.data() + p.images.size(), dst);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}
}  // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir) {
  std::filesystem::path root = dir;
  if (!std::filesystem::exists(root / "test_batch.bin") &&
      std::filesystem::exists(root / "cifar-10-batches-bin" / "test_batch.bin")) {
    root /= "cifar-10-batches-bin";
  }
  std::vector<Dataset> train_parts;
  for (int b = 1; b <= 5; ++b) {
    train_parts.push_back(read_cifar_batch(
        root / ("data_batch_" + std::to_string(b) + ".bin"), kCifarRecordsPerBatch,
        "train"));
  }
  Dataset test = read_cifar_batch(root / "test_batch.bin", kCifarRecordsPerBatch, "test");
  return {concatenate(std::move(train_parts), "train"), std::move(test)};
}

std::optional<std::filesystem::path> default_data_dir() {
  if (const char* env = std::getenv("KEYLOCK_DATA_DIR"); env && *env) {
    return std::filesystem::path(env);
  }
  return std::nullopt;
}

std::vector<std::size_t> sample_indices(const Dataset& dataset, std::size_t size,
                                        std::uint64_t seed, bool stratified) {
  const std::size_t n = dataset.size();
  if (size > n) {
    throw std::invalid_argument("cannot sample " + std::to_string(size) +
                                " rows from a dataset of " + std::to_string(n));
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (size == n) return all;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  if (!stratified) {
    std::shuffle(all.begin(), all.end(), rng);
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
  } else {
    const std::size_t k = dataset.classes;
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < n; ++i) {
      by_class.at(static_cast<std::size_t>(dataset.labels[i])).push_back(i);
    }
    for (auto& rows : by_class) std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<std::size_t> taken(k, 0);
    std::size_t deficit = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t quota = size / k + (c < size % k ? 1 : 0);
      taken[c] = std::min(quota, by_class[c].size());
      deficit += quota - taken[c];
    }
    // Short classes hand their remainder to the others, in class order.
    for (std::size_t c = 0; c < k && deficit > 0; ++c) {
      const std::size_t extra = std::min(deficit, by_class[c].size() - taken[c]);
      taken[c] += extra;
      deficit -= extra;
    }
    for (std::size_t c = 0; c < k; ++c) {
      chosen.insert(chosen.end(), by_class[c].begin(),
                    by_class[c].begin() + static_cast<std::ptrdiff_t>(taken[c]));
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Dataset sample_subset(const Dataset& dataset, std::size_t size,
                      std::uint64_t seed, bool stratified) {
  return dataset.select(sample_indices(dataset, size, seed, stratified));
}

void augment_batch(nn::Tensor<float>& batch, std::mt19937_64& rng, std::size_t pad) {
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  std::bernoulli_distribution flip(0.5);
  std::vector<float> scratch(c * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    const long dy = static_cast<long>(offset(rng)) - static_cast<long>(pad);
    const long dx = static_cast<long>(offset(rng)) - static_cast<long>(pad);
    const bool mirror = flip(rng);
    float* img = batch.data() + i * c * h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const long sy = static_cast<long>(y) + dy;
          const long sxr = static_cast<long>(mirror ? w - 1 - x : x) + dx;
          const bool inside = sy >= 0 && sy < static_cast<long>(h) && sxr >= 0 &&
                              sxr < static_cast<long>(w);
          scratch[(ch * h + y) * w + x] =
              inside ? img[(ch * h + static_cast<std::size_t>(sy)) * w +
                           static_cast<std::size_t>(sxr)]
                     : 0.0f;
        }
      }
    }
    std::copy(scratch.begin(), scratch.end(), img);
  }
}

Dataset synthetic_dataset(std::size_t count, std::size_t classes, std::uint64_t seed,
                          std::string split, nn::Shape sample_shape) {
  if (sample_shape.size() != 3) throw ShapeError("synthetic images need (C, H, W)");
  if (classes == 0) throw std::invalid_argument("synthetic dataset needs classes");
  const std::size_t c = sample_shape[0], h = sample_shape[1], w = sample_shape[2];
  // Templates depend only on the class layout, so train and test splits
  // drawn with different seeds share them.
  std::mt19937_64 template_rng(0x5eedc1a55ULL + classes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<float>> templates(classes, std::vector<float>(c * h * w));
  for (auto& t : templates) {
    const double fy = 1.0 + 3.0 * unit(template_rng);
    const double fx = 1.0 + 3.0 * unit(template_rng);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double phase = 6.283185307179586 * unit(template_rng);
      const double base = 0.3 + 0.4 * unit(template_rng);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double v = base + 0.25 * std::sin(fy * 6.283185307179586 * y / h +
                                                   fx * 6.283185307179586 * x / w + phase);
          t[(ch * h + y) * w + x] = static_cast<float>(v);
        }
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.15);
  Dataset out;
  out.split = std::move(split);
  out.classes = classes;
  out.images = nn::Tensor<float>({count, c, h, w});
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % classes;
    out.labels[i] = static_cast<int>(label);
    float* dst = out.images.data() + i * c * h * w;
    for (std::size_t p = 0; p < c * h * w; ++p) {
      dst[p] = static_cast<float>(
          std::clamp(templates[label][p] + noise(rng), 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace keylock::data
