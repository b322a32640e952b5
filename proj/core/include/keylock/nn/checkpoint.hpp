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

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "keylock/nn/network.hpp"
#include "keylock/nn/sgd.hpp"
#include "keylock/nn/tensor.hpp"

namespace keylock::nn {

/// Checkpoint container layout (all integers little endian):
///
///   "KLCKPT01"
///   repeated record:
///     u32 name length, name bytes (UTF-8)
///     u8  dtype code
///     u32 rank, rank x u64 extents
///     raw values
///   u32 CRC-32 (zlib polynomial) of every preceding byte
enum class DType : std::uint8_t { f32 = 1, f64 = 2, i64 = 3, u8 = 4 };

std::size_t dtype_size(DType dtype);

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint64_t> extents;
  std::vector<std::uint8_t> bytes;
};

class Checkpoint {
 public:
  static constexpr char kMagic[9] = "KLCKPT01";

  void put(std::string name, const Tensor<float>& t);
  void put(std::string name, const Tensor<double>& t);
  void put(std::string name, std::span<const std::int64_t> values);

  bool contains(const std::string& name) const;
  Tensor<float> get_f32(const std::string& name) const;
  Tensor<double> get_f64(const std::string& name) const;
  std::vector<std::int64_t> get_i64(const std::string& name) const;

  const std::vector<CheckpointRecord>& records() const noexcept {
    return records_;
  }
  void add_record(CheckpointRecord record);

 private:
  const CheckpointRecord& find(const std::string& name, DType dtype) const;

  std::vector<CheckpointRecord> records_;
  std::map<std::string, std::size_t> index_;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, truncation, or checksum mismatch.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters go under "param/<name>", batchnorm statistics under
/// "buffer/<name>", optimizer velocity under "velocity/<name>".
void store_network(Checkpoint& ckpt, Network<float>& net);
void load_network(const Checkpoint& ckpt, Network<float>& net);
void store_velocity(Checkpoint& ckpt, const Sgd<float>& opt);
void load_velocity(const Checkpoint& ckpt, Sgd<float>& opt);

}  // namespace keylock::nn
