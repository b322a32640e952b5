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

#include "keylock/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "keylock/errors.hpp"

namespace keylock::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  std::uint8_t raw[sizeof(U)];
  std::memcpy(raw, &value, sizeof(U));
  out.insert(out.end(), raw, raw + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError("checkpoint truncated: need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", have " +
                        std::to_string(remaining()));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
CheckpointRecord make_record(std::string name, DType dtype, const Shape& shape,
                             std::span<const T> values) {
  CheckpointRecord r;
  r.name = std::move(name);
  r.dtype = dtype;
  r.extents.assign(shape.begin(), shape.end());
  r.bytes.resize(values.size_bytes());
  std::memcpy(r.bytes.data(), values.data(), values.size_bytes());
  return r;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  throw FormatError("unknown checkpoint dtype code " +
                    std::to_string(static_cast<int>(dtype)));
}

void Checkpoint::add_record(CheckpointRecord record) {
  const std::uint64_t count = element_count(
      Shape(record.extents.begin(), record.extents.end()));
  if (record.bytes.size() != count * dtype_size(record.dtype)) {
    throw FormatError("checkpoint record '" + record.name +
                      "' byte count does not match its extents");
  }
  auto [it, inserted] = index_.try_emplace(record.name, records_.size());
  if (inserted) {
    records_.push_back(std::move(record));
  } else {
    records_[it->second] = std::move(record);
  }
}

void Checkpoint::put(std::string name, const Tensor<float>& t) {
  add_record(make_record<float>(std::move(name), DType::f32, t.shape(), t.values()));
}

void Checkpoint::put(std::string name, const Tensor<double>& t) {
  add_record(make_record<double>(std::move(name), DType::f64, t.shape(), t.values()));
}

void Checkpoint::put(std::string name, std::span<const std::int64_t> values) {
  add_record(make_record<std::int64_t>(std::move(name), DType::i64,
                                       Shape{values.size()}, values));
}

bool Checkpoint::contains(const std::string& name) const {
  return index_.contains(name);
}

const CheckpointRecord& Checkpoint::find(const std::string& name,
                                         DType dtype) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("checkpoint has no record '" + name + "'");
  const CheckpointRecord& r = records_[it->second];
  if (r.dtype != dtype) {
    throw FormatError("checkpoint record '" + name + "' has dtype code " +
                      std::to_string(static_cast<int>(r.dtype)));
  }
  return r;
}

namespace {
template <typename T>
Tensor<T> record_tensor(const CheckpointRecord& r) {
  std::vector<T> values(r.bytes.size() / sizeof(T));
  std::memcpy(values.data(), r.bytes.data(), r.bytes.size());
  return Tensor<T>(Shape(r.extents.begin(), r.extents.end()), std::move(values));
}
}  // namespace

Tensor<float> Checkpoint::get_f32(const std::string& name) const {
  return record_tensor<float>(find(name, DType::f32));
}

Tensor<double> Checkpoint::get_f64(const std::string& name) const {
  return record_tensor<double>(find(name, DType::f64));
}

std::vector<std::int64_t> Checkpoint::get_i64(const std::string& name) const {
  const auto t = record_tensor<std::int64_t>(find(name, DType::i64));
  return {t.values().begin(), t.values().end()};
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(Checkpoint::kMagic, Checkpoint::kMagic + 8);
  for (const auto& r : ckpt.records()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.extents.size()));
    for (auto e : r.extents) put_le<std::uint64_t>(out, e);
    out.insert(out.end(), r.bytes.begin(), r.bytes.end());
  }
  put_le<std::uint32_t>(out, crc32_of(out));
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), Checkpoint::kMagic, 8) != 0) {
    throw FormatError("not a keylock checkpoint (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  const std::uint32_t actual = crc32_of(body);
  if (stored != actual) {
    throw FormatError("checkpoint checksum mismatch: stored " +
                      std::to_string(stored) + ", computed " +
                      std::to_string(actual));
  }
  Reader in(body.subspan(8));
  Checkpoint ckpt;
  while (in.remaining() > 0) {
    CheckpointRecord r;
    const auto name_len = in.get<std::uint32_t>();
    const auto name = in.take(name_len);
    r.name.assign(name.begin(), name.end());
    r.dtype = static_cast<DType>(in.get<std::uint8_t>());
    const std::size_t width = dtype_size(r.dtype);
    const auto rank = in.get<std::uint32_t>();
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.extents.push_back(in.get<std::uint64_t>());
      count *= r.extents.back();
    }
    const auto raw = in.take(count * width);
    r.bytes.assign(raw.begin(), raw.end());
    ckpt.add_record(std::move(r));
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void store_network(Checkpoint& ckpt, Network<float>& net) {
  for (const auto* p : net.parameters()) ckpt.put("param/" + p->name, p->value);
  for (const auto& b : net.buffers()) ckpt.put("buffer/" + b.name, *b.tensor);
}

void load_network(const Checkpoint& ckpt, Network<float>& net) {
  const auto assign = [](const std::string& key, Tensor<float> value,
                         Tensor<float>& target) {
    if (value.shape() != target.shape()) {
      throw FormatError("checkpoint record '" + key + "' has shape " +
                        to_string(value.shape()) + ", model expects " +
                        to_string(target.shape()));
    }
    target = std::move(value);
  };
  for (auto* p : net.parameters()) {
    const std::string key = "param/" + p->name;
    assign(key, ckpt.get_f32(key), p->value);
  }
  for (auto& b : net.buffers()) {
    const std::string key = "buffer/" + b.name;
    assign(key, ckpt.get_f32(key), *b.tensor);
  }
}

void store_velocity(Checkpoint& ckpt, const Sgd<float>& opt) {
  for (const auto& [name, v] : opt.velocities()) ckpt.put("velocity/" + name, v);
}

void load_velocity(const Checkpoint& ckpt, Sgd<float>& opt) {
  const std::string prefix = "velocity/";
  for (const auto& r : ckpt.records()) {
    if (r.name.rfind(prefix, 0) == 0) {
      opt.velocities()[r.name.substr(prefix.size())] = ckpt.get_f32(r.name);
    }
  }
}

}  // namespace keylock::nn
